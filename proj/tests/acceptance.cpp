// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero only on an internal error,
// or on any FAIL with --strict.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "harness/config.hpp"
#include "harness/experiments.hpp"
#include "support.hpp"
#include "wwtp/dioko/training.hpp"
#include "wwtp/empc/empc.hpp"
#include "wwtp/indices/indices.hpp"
#include "wwtp/qp/qp.hpp"

using namespace wwtp;
using harness::EvalJob;
using harness::EvalRow;
using harness::Method;
using influent::Weather;

namespace {

// ---- tolerances -------------------------------------------------------------
constexpr double kSettleRel = 0.10;
constexpr double kSettleSeconds = 120.0;
constexpr double kIndexAbs = 0.01;
constexpr double kOciIdentityRel = 1e-9;
constexpr int kFdDraws = 100;
constexpr double kFdRel = 1e-5;
constexpr int kQpTrials = 200;
constexpr double kGridStep = 1e-3;
constexpr double kGridTol = 1e-5;
constexpr double kKktTol = 1e-8;
constexpr int kCondenseTrials = 100;
constexpr double kCondenseRel = 1e-8;
constexpr double kToyVal = 1e-3;
constexpr int kToyEpochs = 100;
constexpr double kDeskRatio = 0.1;
constexpr int kDeskSeeds = 3;
constexpr double kEmpcVsConstant = 0.10;
constexpr double kEmpcVsRandom = 0.20;
constexpr double kMedianStepMs = 50.0;
constexpr double kNoiseDegradation = 0.15;

struct Verdict {
  bool evaluated = false;
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o << std::setprecision(prec) << v;
  return o.str();
}

void progress(const std::string& msg) { std::clog << "[acceptance] " << msg << std::endl; }

// ---- 1 ----------------------------------------------------------------------

Verdict settle_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = settle_to_steady_state(PlantParams{}, steady_state_actuation(),
                                        constant_dry_influent());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto rows = harness::settle_report(s);
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t i = 0; i < kReactorDim; ++i) {
    if (std::isnan(rows[i].rel_dev)) continue;
    if (rows[i].rel_dev > worst) {
      worst = rows[i].rel_dev;
      worst_name = rows[i].name;
    }
  }
  const double bottom = s[layer_index(kNumLayers, L_X)], top = s[layer_index(1, L_X)];
  const double dev_bottom = std::abs(bottom - 6399.44) / 6399.44;
  const double dev_top = std::abs(top - 12.50) / 12.50;
  Verdict v{true, worst <= kSettleRel && dev_bottom <= kSettleRel && dev_top <= kSettleRel &&
                      secs < kSettleSeconds,
            ""};
  v.detail = "worst reactor dev " + fmt(worst) + " (" + worst_name + "), S_O5 " +
             fmt(s[reactor_index(5, S_O)]) + ", S_NH5 " + fmt(s[reactor_index(5, S_NH)]) +
             ", S_NO5 " + fmt(s[reactor_index(5, S_NO)]) + ", X bottom " + fmt(bottom, 6) +
             ", X top " + fmt(top) + ", " + fmt(secs, 3) + " s";
  return v;
}

// ---- 2 ----------------------------------------------------------------------

Verdict index_arithmetic(const std::vector<indices::WindowReport>& reports) {
  const PlantParams p;
  const std::array<double, 5> kla{0.0, 0.0, 240.0, 240.0, 84.0};
  const double ae = indices::ae_rate(kla, p.volume);
  const double pe = indices::pe_rate(55338.0, 18846.0, 385.0);
  const double me = indices::me_rate(kla, p.volume);
  double worst = 0.0;
  for (const auto& r : reports) {
    const double lhs = r.oci, rhs = 5.0 * r.sp + r.ae + r.pe + r.me;
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  Verdict v;
  v.evaluated = true;
  v.pass = std::abs(ae - 3341.39) <= kIndexAbs && std::abs(pe - 391.37) <= kIndexAbs &&
           me == 240.0 && !reports.empty() && worst <= kOciIdentityRel;
  v.detail = "AE " + fmt(ae, 8) + ", PE " + fmt(pe, 8) + ", ME " + fmt(me, 8) +
             ", OCI identity worst rel " + fmt(worst, 3) + " over " +
             std::to_string(reports.size()) + " reports";
  return v;
}

// ---- 3 ----------------------------------------------------------------------

Verdict gradient_check() {
  const auto ds = test::toy_dataset(400, 5, 100, 8);
  double worst = 0.0;
  int fails = 0;
  for (int draw = 0; draw < kFdDraws; ++draw) {
    const auto seed = static_cast<std::uint64_t>(1000 + draw);
    dioko::Model m(test::toy_dims(4, 6), seed, 0.3);
    dioko::fit_standardization(m, ds);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    dioko::Vector qv(4), pv(4);
    for (int i = 0; i < 4; ++i) {
      qv(i) = 0.3 * g(rng);
      pv(i) = 0.3 * g(rng);
    }
    m.params().assign(m.qv_index(), qv);
    m.params().assign(m.p_index(), pv.transpose());
    m.params().assign(m.bias_index(), dioko::Matrix::Constant(1, 1, 0.2 * g(rng)));
    std::uniform_int_distribution<std::size_t> pick(0, ds.windows(dioko::Split::Train).size() - 1);
    std::vector<std::size_t> starts;
    for (int i = 0; i < 3; ++i) starts.push_back(ds.windows(dioko::Split::Train)[pick(rng)]);
    const auto wb = dioko::make_batch(m, ds, starts, 5);
    const auto lv = dioko::loss_and_gradient(m, wb, 0.1);
    double num = 0.0, den = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      for (Eigen::Index k = 0; k < m.params().value(i).size(); ++k) {
        dioko::Model a = m, b = m;
        a.params().mutable_value(i).data()[k] += h;
        b.params().mutable_value(i).data()[k] -= h;
        const double fd =
            (dioko::loss_and_gradient(a, wb, 0.1).total - dioko::loss_and_gradient(b, wb, 0.1).total) /
            (2 * h);
        num += std::pow(lv.grads.g[i].data()[k] - fd, 2);
        den += fd * fd;
      }
    }
    const double rel = std::sqrt(num / den);
    worst = std::max(worst, rel);
    if (!(rel < kFdRel)) ++fails;
  }
  return {true, fails == 0,
          std::to_string(kFdDraws) + " draws, worst relative error " + fmt(worst, 3)};
}

// ---- 4 ----------------------------------------------------------------------

// Every lattice point lb + k*h of the box (the last point per axis clamped onto ub).
double grid_minimum(const qp::QPProblem& p, double h) {
  const int n = static_cast<int>(p.size());
  std::vector<int> counts(n), idx(n, 0);
  for (int i = 0; i < n; ++i) {
    counts[i] = static_cast<int>(std::ceil((p.ub(i) - p.lb(i)) / h - 1e-9)) + 1;
  }
  std::vector<double> z(n);
  double best = INFINITY;
  while (true) {
    for (int i = 0; i < n; ++i) z[i] = std::min(p.ub(i), p.lb(i) + idx[i] * h);
    double f = 0.0;
    for (int i = 0; i < n; ++i) {
      double hz = 0.0;
      for (int j = 0; j < n; ++j) hz += p.H(i, j) * z[j];
      f += z[i] * (0.5 * hz + p.g(i));
    }
    best = std::min(best, f);
    int i = 0;
    while (i < n && ++idx[i] == counts[i]) idx[i++] = 0;
    if (i == n) break;
  }
  return best;
}

Verdict qp_criterion(double empc_max_kkt, std::size_t empc_runs) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double width[] = {2.0, 0.6, 0.08, 0.025};
  double worst = 0.0, worst_kkt = 0.0;
  int fails = 0, singular = 0;
  for (int t = 0; t < kQpTrials; ++t) {
    const int n = 1 + t % 4;
    const int rank = (t % 3 == 2 && n > 1) ? n - 1 : n;
    qp::Matrix m(n, rank);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    qp::QPProblem p;
    p.H = m * m.transpose() / n;
    if (rank < n) ++singular;
    p.lb.resize(n);
    p.ub.resize(n);
    qp::Vector target(n);
    const double w = width[n - 1];
    for (int i = 0; i < n; ++i) {
      p.lb(i) = u(rng);
      p.ub(i) = p.lb(i) + w;
      target(i) = p.lb(i) + w * (0.5 + 0.9 * u(rng));
    }
    qp::Vector jitter(n);
    for (int i = 0; i < n; ++i) jitter(i) = 0.1 * w * g(rng);
    p.g = -p.H * target + jitter;
    const auto s = qp::solve(p, {1e-10, 5000, true});
    const double grid = grid_minimum(p, kGridStep);
    const double diff = std::abs(s.objective - grid);
    worst = std::max(worst, diff);
    worst_kkt = std::max(worst_kkt, s.kkt_residual);
    if (!(diff <= kGridTol) || !p.box_feasible()) ++fails;
  }
  Verdict v;
  v.evaluated = true;
  v.pass = fails == 0 && empc_runs > 0 && empc_max_kkt <= kKktTol;
  v.detail = std::to_string(kQpTrials) + " grid QPs (" + std::to_string(singular) +
             " singular), worst |f-f_grid| " + fmt(worst, 3) + ", max KKT " + fmt(worst_kkt, 3) + ", " +
             std::to_string(fails) + " over tolerance; EMPC max KKT " + fmt(empc_max_kkt, 3) + " over " +
             std::to_string(empc_runs) + " closed-loop runs";
  return v;
}

// ---- 5 ----------------------------------------------------------------------

double direct_cost(const dioko::Model& m, const empc::EMPCConfig& cfg, const dioko::Vector& psi0,
                   const dioko::Vector& z) {
  const int nu = static_cast<int>(m.B().cols());
  dioko::Vector r(nu);
  for (int i = 0; i < nu; ++i) {
    r(i) = cfg.R[static_cast<std::size_t>(i)] * m.u_std.scale(i) * m.u_std.scale(i) / m.c_scale;
  }
  dioko::Vector psi = psi0;
  double total = m.cost_head(psi);
  for (int j = 0; j < cfg.horizon; ++j) {
    psi = m.A() * psi + m.B() * z.segment(j * nu, nu);
    total += m.cost_head(psi);
    if (j > 0) {
      const dioko::Vector du = z.segment(j * nu, nu) - z.segment((j - 1) * nu, nu);
      total += du.dot(r.cwiseProduct(du));
    }
  }
  return total;
}

Verdict condense_criterion(const dioko::Model& m, const empc::EMPCConfig& cfg) {
  const empc::Condenser c(m, cfg);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto y0 = measure(test::settled_state());
  const auto d0 = constant_dry_influent().as_vector();
  const dioko::Vector y = Eigen::Map<const dioko::Vector>(y0.data(), kNumMeasurements);
  const dioko::Vector d = Eigen::Map<const dioko::Vector>(d0.data(), d0.size());
  double worst = 0.0;
  for (int t = 0; t < kCondenseTrials; ++t) {
    dioko::Vector yp = y;
    for (Eigen::Index i = 0; i < yp.size(); ++i) yp(i) *= 1.0 + 0.2 * g(rng);
    const dioko::Vector psi0 = m.encode(yp.cwiseMax(0.0), d);
    dioko::Vector z(c.lb().size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = c.lb()(i) + u01(rng) * (c.ub()(i) - c.lb()(i));
    const double cond = c.condense(psi0).objective(z);
    const double direct = direct_cost(m, cfg, psi0, z);
    worst = std::max(worst, std::abs(cond - direct) / std::max(1e-300, std::abs(direct)));
  }
  return {true, worst <= kCondenseRel,
          std::to_string(kCondenseTrials) + " sequences at n = " + std::to_string(c.lb().size()) +
              ", worst relative gap " + fmt(worst, 3)};
}

// ---- 6 ----------------------------------------------------------------------

Verdict toy_training(double& best_out) {
  const auto ds = test::toy_dataset();
  dioko::TrainConfig cfg;
  cfg.epochs = kToyEpochs;
  cfg.batch = 16;
  cfg.l2 = 0.0;
  cfg.horizon = 10;
  cfg.seed = 1;
  const auto res = dioko::train(dioko::Model(test::toy_dims(), 1), ds, cfg);
  double best = res.initial_val;
  int epoch = 0;
  for (const auto& r : res.curve) {
    if (r.val < best) {
      best = r.val;
      epoch = r.epoch;
    }
  }
  best_out = best;
  return {true, best < kToyVal, "toy best val " + fmt(best, 3) + " at epoch " + std::to_string(epoch)};
}

std::string weather_name(Weather w) { return influent::to_string(w); }

const EvalRow& find(const std::vector<EvalRow>& rows, const std::string& method, Weather w,
                    const std::string& plant = "clean") {
  for (const auto& r : rows) {
    if (r.method == method && r.weather == weather_name(w) && r.plant == plant) return r;
  }
  throw std::runtime_error("missing run " + method + "/" + weather_name(w) + "/" + plant);
}

double rel(double a, double b) { return (a - b) / b; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string report_path = "acceptance_report.txt";
  bool strict = false;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--report", report_path, "report file");
  app.add_flag("--strict", strict, "nonzero exit when any criterion fails");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  std::map<int, Verdict> verdicts;
  auto run = [&](int id, const std::function<Verdict()>& fn) {
    progress("criterion " + std::to_string(id));
    try {
      verdicts[id] = fn();
    } catch (const std::exception& e) {
      verdicts[id] = {false, false, std::string("error: ") + e.what()};
    }
  };

  harness::ExperimentConfig cfg;
  cfg.threads = threads;
  cfg.evaluate.days = 2.0;
  harness::Context ctx(cfg);
  ctx.quiet = false;

  run(1, settle_criterion);
  run(3, gradient_check);

  // Desk-scale training: all-weather data, three seeds. Seed 1 is the controller model.
  std::shared_ptr<const dioko::Model> model;
  double toy_best = 0.0;
  run(6, [&] {
    const auto toy = toy_training(toy_best);
    const auto& ds = ctx.dataset();
    std::string detail = toy.detail + "; desk";
    bool desk_ok = true;
    for (int i = 0; i < kDeskSeeds; ++i) {
      const auto seed = cfg.seed + static_cast<std::uint64_t>(i);
      progress("desk training seed " + std::to_string(seed));
      auto res = dioko::train(dioko::Model(ctx.model_dims(cfg.train.latent), seed), ds,
                              ctx.train_config(seed, cfg.train.lr, cfg.threads));
      const double final_val = res.curve.empty() ? res.initial_val : res.curve.back().val;
      const double ratio = final_val / res.initial_val;
      desk_ok = desk_ok && ratio <= kDeskRatio;
      detail += " seed " + std::to_string(seed) + " " + fmt(res.initial_val) + " -> " +
                fmt(final_val) + " (x" + fmt(ratio, 3) + ")";
      if (i == 0) model = std::make_shared<const dioko::Model>(std::move(res.best));
    }
    return Verdict{true, toy.pass && desk_ok, detail};
  });
  if (!model) {
    progress("desk training failed; training a fallback controller model");
    model = ctx.model();
  }

  run(5, [&] { return condense_criterion(*model, ctx.empc_config()); });

  // Closed-loop runs shared by 2, 4, 7, 8, 9, 10.
  std::vector<EvalRow> rows;
  std::shared_ptr<const dioko::Model> dry_model;
  try {
    progress("closed-loop runs (clean and noisy)");
    auto jobs = harness::standard_jobs(ctx, model, false);
    for (auto w : cfg.evaluate.weathers) jobs.push_back({Method::Empc, w, true, model, ""});
    rows = harness::run_jobs(ctx, jobs);
    progress("dry-only model");
    const auto dry_ds = harness::collect(ctx, {Weather::Dry}, false);
    auto res = dioko::train(dioko::Model(ctx.model_dims(cfg.train.latent), cfg.seed), dry_ds,
                            ctx.train_config(cfg.seed, cfg.train.lr, cfg.threads));
    dry_model = std::make_shared<const dioko::Model>(std::move(res.best));
    std::vector<EvalJob> dry_jobs;
    for (auto w : cfg.evaluate.weathers) dry_jobs.push_back({Method::Empc, w, false, dry_model, "dioko-dry"});
    const auto dry_rows = harness::run_jobs(ctx, dry_jobs);
    rows.insert(rows.end(), dry_rows.begin(), dry_rows.end());
  } catch (const std::exception& e) {
    progress(std::string("closed-loop stage failed: ") + e.what());
  }
  const std::string empc = harness::to_string(Method::Empc);

  run(2, [&] {
    std::vector<indices::WindowReport> reports;
    for (const auto& r : rows) {
      if (!r.aborted) reports.push_back(r.report);
    }
    return index_arithmetic(reports);
  });

  run(4, [&] {
    double kkt = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.method == empc || r.method == "dioko-dry") {
        kkt = std::max(kkt, r.max_kkt_residual);
        ++n;
      }
    }
    return qp_criterion(kkt, n);
  });

  run(7, [&] {
    bool ok = true;
    std::string detail;
    for (auto w : cfg.evaluate.weathers) {
      const auto& e = find(rows, empc, w);
      const double vc = rel(e.stage_cost, find(rows, "constant", w).stage_cost);
      const double vr = rel(e.stage_cost, find(rows, "random", w).stage_cost);
      if (w == Weather::Dry) {
        ok = ok && vc <= -kEmpcVsConstant && vr <= -kEmpcVsRandom;
      } else {
        ok = ok && vc < 0.0 && vr < 0.0;
      }
      ok = ok && !e.aborted;
      detail += (detail.empty() ? "" : "; ") + weather_name(w) + " vs constant " +
                fmt(100 * vc, 3) + "%, vs random " + fmt(100 * vr, 3) + "%";
    }
    return Verdict{true, ok, detail};
  });

  run(8, [&] {
    double worst = 0.0;
    for (const auto& r : rows) {
      if (r.method == empc && r.plant == "clean") worst = std::max(worst, r.median_solve_ms);
    }
    for (auto w : cfg.evaluate.weathers) find(rows, empc, w);
    return Verdict{true, worst < kMedianStepMs,
                   "largest per-run median step time " + fmt(worst, 3) + " ms"};
  });

  run(9, [&] {
    bool ok = true;
    std::string detail;
    for (auto w : cfg.evaluate.weathers) {
      const auto& c = find(rows, empc, w);
      const auto& n = find(rows, empc, w, "noisy");
      const double d = rel(n.stage_cost, c.stage_cost);
      ok = ok && d < kNoiseDegradation && !n.aborted;
      detail += (detail.empty() ? "" : "; ") + weather_name(w) + " noisy vs clean " +
                fmt(100 * d, 3) + "%";
    }
    return Verdict{true, ok, detail};
  });

  run(10, [&] {
    bool ok = true;
    std::string detail;
    for (auto w : cfg.evaluate.weathers) {
      const double dry = find(rows, "dioko-dry", w).stage_cost;
      const double all = find(rows, empc, w).stage_cost;
      ok = ok && all <= dry;
      detail += (detail.empty() ? "" : "; ") + weather_name(w) + " all-weather vs dry " +
                fmt(100 * rel(all, dry), 3) + "%";
      if (w != Weather::Dry) {
        const double vc = rel(dry, find(rows, "constant", w).stage_cost);
        const double vr = rel(dry, find(rows, "random", w).stage_cost);
        ok = ok && vc < 0.0 && vr < 0.0;
        detail += ", dry model vs constant " + fmt(100 * vc, 3) + "%, vs random " +
                  fmt(100 * vr, 3) + "%";
      }
    }
    return Verdict{true, ok, detail};
  });

  std::ostringstream out;
  bool all_pass = true, all_evaluated = true;
  for (int id = 1; id <= 10; ++id) {
    const auto it = verdicts.find(id);
    const Verdict v = it == verdicts.end() ? Verdict{false, false, "not run"} : it->second;
    all_pass = all_pass && v.pass;
    all_evaluated = all_evaluated && v.evaluated;
    out << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << '\n';
  }
  std::cout << out.str() << std::flush;
  std::ofstream rep(report_path);
  rep << out.str();
  if (!rep) std::cerr << "cannot write " << report_path << '\n';

  if (!all_evaluated) return 2;
  return strict && !all_pass ? 1 : 0;
}
