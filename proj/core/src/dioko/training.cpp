#include "wwtp/dioko/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace wwtp::dioko {

void fit_standardization(Model& model, const Dataset& ds) {
  const auto [a, b] = ds.split_range(Split::Train);
  if (b <= a) throw std::invalid_argument("fit_standardization: empty training split");
  const auto n = static_cast<Eigen::Index>(b - a);
  const auto s = static_cast<Eigen::Index>(a);
  model.y_std = Standardizer::fit(ds.y.middleCols(s, n));
  model.d_std = Standardizer::fit(ds.d.middleCols(s, n));
  model.u_std = Standardizer::fit(ds.u.middleCols(s, n));
  const auto cs = Standardizer::fit(ds.c.middleCols(s, n));
  model.c_mean = cs.mean(0);
  model.c_scale = cs.scale(0);
}

WindowBatch make_batch(const Model& model, const Dataset& ds, std::span<const std::size_t> starts,
                       int horizon) {
  const auto& dims = model.dims();
  if (ds.y.rows() != dims.ny || ds.d.rows() != dims.nd || ds.u.rows() != dims.nu) {
    throw std::invalid_argument("make_batch: dataset dimensions do not match the model");
  }
  WindowBatch wb;
  wb.batch = static_cast<int>(starts.size());
  wb.horizon = horizon;
  const Eigen::Index B = wb.batch, T = horizon;
  wb.x.resize(dims.ny + dims.nd, B * (T + 1));
  wb.u.resize(dims.nu, B * T);
  wb.c.resize(1, B * (T + 1));
  for (Eigen::Index bi = 0; bi < B; ++bi) {
    const auto k0 = static_cast<Eigen::Index>(starts[static_cast<std::size_t>(bi)]);
    if (k0 + T >= ds.y.cols()) throw std::out_of_range("make_batch: window past end of dataset");
    for (Eigen::Index j = 0; j <= T; ++j) {
      const Eigen::Index col = j * B + bi, k = k0 + j;
      wb.x.col(col).head(dims.ny) = model.y_std.apply(ds.y.col(k));
      if (dims.nd > 0) wb.x.col(col).tail(dims.nd) = model.d_std.apply(ds.d.col(k));
      wb.c(0, col) = (ds.c(0, k) - model.c_mean) / model.c_scale;
      if (j < T) wb.u.col(j * B + bi) = model.u_std.apply(ds.u.col(k));
    }
  }
  return wb;
}

namespace {

LossVars record_loss_scaled(nn::Tape& tape, const Model& model, const WindowBatch& wb, double l2,
                            double norm) {
  const Eigen::Index B = wb.batch, T = wb.horizon;
  nn::Var x = tape.constant(wb.x);
  nn::Var enc = nn::mlp_forward(tape, model.encoder_spec(), model.params(), x);
  nn::Var a = tape.param(model.a_index());
  nn::Var bm = tape.param(model.b_index());
  nn::Var q = tape.exp(tape.param(model.qv_index()));
  nn::Var p = tape.param(model.p_index());
  nn::Var bias = tape.param(model.bias_index());

  nn::Var psi = tape.cols(enc, 0, B);
  nn::Var data = tape.constant(Matrix::Zero(1, 1));
  for (Eigen::Index j = 0; j <= T; ++j) {
    if (j > 0) {
      nn::Var uj = tape.constant(wb.u.middleCols((j - 1) * B, B));
      psi = tape.add(tape.matmul(a, psi), tape.matmul(bm, uj));
      nn::Var gap = tape.sub(tape.cols(enc, j * B, B), psi);
      data = tape.add(data, tape.sum_squares(gap));
    }
    nn::Var quad = tape.colwise_sum(tape.mul_colwise(tape.hadamard(psi, psi), q));
    nn::Var c_hat = tape.add_scalar(tape.add(quad, tape.matmul(p, psi)), bias);
    nn::Var err = tape.sub(c_hat, tape.constant(wb.c.middleCols(j * B, B)));
    data = tape.add(data, tape.sum_squares(err));
  }
  data = tape.scale(data, 1.0 / norm);
  nn::Var total = l2 > 0.0 ? tape.add(data, nn::l2_penalty(tape, model.params(), l2)) : data;
  return {total, data};
}

}  // namespace

LossVars record_loss(nn::Tape& tape, const Model& model, const WindowBatch& batch, double l2) {
  if (batch.batch < 1) throw std::invalid_argument("record_loss: empty batch");
  return record_loss_scaled(tape, model, batch, l2, batch.batch);
}

LossValue loss_and_gradient(const Model& model, const WindowBatch& batch, double l2) {
  nn::Tape tape(model.params());
  const auto v = record_loss(tape, model, batch, l2);
  LossValue out;
  out.total = tape.value(v.total)(0, 0);
  out.data = tape.value(v.data)(0, 0);
  out.grads = tape.backward(v.total);
  return out;
}

double training_loss(const Model& model, const SampleWindow& window, double l2) {
  const std::size_t start = window.start;
  const auto wb = make_batch(model, *window.data, std::span(&start, 1), window.horizon);
  nn::Tape tape(model.params());
  return tape.value(record_loss(tape, model, wb, l2).total)(0, 0);
}

double data_loss(const Model& model, const Dataset& ds, Split split, int horizon,
                 std::size_t chunk) {
  if (horizon < 0) horizon = ds.horizon;
  const auto starts = ds.windows(split, horizon);
  if (starts.empty()) throw std::invalid_argument("data_loss: split has no windows");
  double sum = 0.0;
  for (std::size_t i = 0; i < starts.size(); i += chunk) {
    const std::size_t n = std::min(chunk, starts.size() - i);
    const auto wb = make_batch(model, ds, std::span(starts).subspan(i, n), horizon);
    nn::Tape tape(model.params());
    sum += tape.value(record_loss_scaled(tape, model, wb, 0.0, 1.0).data)(0, 0);
  }
  return sum / static_cast<double>(starts.size());
}

TrainingDivergedError::TrainingDivergedError(int epoch, int batch, const std::string& why)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch) + ": " + why),
      epoch_(epoch),
      batch_(batch) {}

namespace {

LossValue sharded_loss(const Model& model, const Dataset& ds, std::span<const std::size_t> starts,
                       int horizon, double l2, int threads) {
  const auto shards = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(starts.size())));
  if (shards == 1) return loss_and_gradient(model, make_batch(model, ds, starts, horizon), l2);

  const double norm = static_cast<double>(starts.size());
  std::vector<LossValue> parts(shards);
  std::vector<std::thread> pool;
  const std::size_t per = (starts.size() + shards - 1) / shards;
  for (std::size_t s = 0; s < shards; ++s) {
    pool.emplace_back([&, s] {
      const std::size_t lo = s * per, hi = std::min(starts.size(), lo + per);
      if (lo >= hi) {
        parts[s].grads = nn::Gradients::zeros_like(model.params());
        return;
      }
      const auto wb = make_batch(model, ds, starts.subspan(lo, hi - lo), horizon);
      nn::Tape tape(model.params());
      const auto v = record_loss_scaled(tape, model, wb, s == 0 ? l2 : 0.0, norm);
      parts[s].total = tape.value(v.total)(0, 0);
      parts[s].data = tape.value(v.data)(0, 0);
      parts[s].grads = tape.backward(v.total);
    });
  }
  for (auto& th : pool) th.join();
  LossValue out = std::move(parts[0]);
  for (std::size_t s = 1; s < shards; ++s) {
    out.total += parts[s].total;
    out.data += parts[s].data;
    out.grads += parts[s].grads;
  }
  return out;
}

}  // namespace

TrainResult train(Model model, const Dataset& ds, const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch < 1) throw std::invalid_argument("train: bad epochs or batch");
  fit_standardization(model, ds);
  auto train_starts = ds.windows(Split::Train, cfg.horizon);
  if (train_starts.empty()) throw std::invalid_argument("train: training split has no windows");
  const bool have_val = !ds.windows(Split::Val, cfg.horizon).empty();

  TrainResult res;
  res.initial_val = have_val ? data_loss(model, ds, Split::Val, cfg.horizon) : 0.0;
  res.best = model;
  double best_val = have_val ? res.initial_val : std::numeric_limits<double>::infinity();

  auto adam = nn::AdamState::for_params(model.params(), cfg.lr);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(train_starts.begin(), train_starts.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < train_starts.size(); i += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t n = std::min<std::size_t>(cfg.batch, train_starts.size() - i);
      const int bidx = static_cast<int>(batches);
      auto lv = sharded_loss(model, ds, std::span(train_starts).subspan(i, n), cfg.horizon, cfg.l2,
                             cfg.threads);
      if (!std::isfinite(lv.total)) throw TrainingDivergedError(epoch, bidx, "non-finite loss");
      try {
        nn::adam_step(adam, model.params(), lv.grads);
      } catch (const nn::NonFiniteGradientError& e) {
        throw TrainingDivergedError(epoch, bidx, e.what());
      }
      if (!model.params().all_finite()) {
        throw TrainingDivergedError(epoch, bidx, "non-finite parameters");
      }
      sum += lv.total;
      ++batches;
    }
    EpochRecord rec{epoch, sum / static_cast<double>(batches), 0.0};
    if (have_val) {
      rec.val = data_loss(model, ds, Split::Val, cfg.horizon);
      if (!std::isfinite(rec.val)) {
        throw TrainingDivergedError(epoch, static_cast<int>(batches), "non-finite validation loss");
      }
    }
    const double score = have_val ? rec.val : rec.train;
    if (score < best_val) {
      best_val = score;
      res.best = model;
      res.best_epoch = epoch;
    }
    res.curve.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);
  }
  res.last = std::move(model);
  return res;
}

void write_loss_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve) {
  out << "epoch,train,val\n" << std::setprecision(10);
  for (const auto& r : curve) out << r.epoch << ',' << r.train << ',' << r.val << '\n';
}

namespace {

template <typename Predict>
double prediction_metric(const Dataset& ds, Split split, int horizon, Predict predict) {
  const auto starts = ds.windows(split, horizon);
  if (starts.empty()) throw std::invalid_argument("evaluate_prediction: split has no windows");
  double sum = 0.0;
  for (std::size_t k : starts) sum += predict(k);
  return sum / static_cast<double>(starts.size());
}

}  // namespace

double evaluate_prediction(const Model& model, const Dataset& ds, Split split, int horizon) {
  return prediction_metric(ds, split, horizon, [&](std::size_t k) {
    const auto col = static_cast<Eigen::Index>(k);
    Vector psi = model.encode(ds.y.col(col), ds.d.col(col));
    double err = 0.0;
    for (int j = 1; j <= horizon; ++j) {
      psi = model.A() * psi + model.B() * model.standardize_u(ds.u.col(col + j - 1));
      const double c = (ds.c(0, col + j) - model.c_mean) / model.c_scale;
      err += std::pow(c - model.cost_head(psi), 2);
    }
    return err;
  });
}

double evaluate_constant_predictor(const Model& model, const Dataset& ds, Split split,
                                   int horizon) {
  return prediction_metric(ds, split, horizon, [&](std::size_t k) {
    const auto col = static_cast<Eigen::Index>(k);
    const double c0 = (ds.c(0, col) - model.c_mean) / model.c_scale;
    double err = 0.0;
    for (int j = 1; j <= horizon; ++j) {
      err += std::pow((ds.c(0, col + j) - model.c_mean) / model.c_scale - c0, 2);
    }
    return err;
  });
}

}  // namespace wwtp::dioko
