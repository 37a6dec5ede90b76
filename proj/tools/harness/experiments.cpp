#include "harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "harness/manifest.hpp"
#include "wwtp/plant/io.hpp"

namespace wwtp::harness {

namespace fs = std::filesystem;
using influent::Weather;

Context::Context(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  apply_plant_overrides(params_, cfg_.plant);
  params_.validate();
}

void Context::log(const std::string& msg) const {
  if (!quiet) std::clog << msg << std::endl;
}

const PlantState& Context::steady_state() {
  if (!steady_) {
    if (!cfg_.state.empty()) {
      steady_ = load_state(cfg_.state);
      inputs_.push_back(cfg_.state);
    } else {
      log("settling plant to steady state");
      steady_ = settle_to_steady_state(params_, steady_state_actuation(), constant_dry_influent());
    }
  }
  return *steady_;
}

namespace {

fs::path weather_file(const fs::path& dir, Weather w) {
  return dir / (std::string(influent::to_string(w)) + ".txt");
}

}  // namespace

dioko::WeatherSource Context::weather_source() {
  if (cfg_.weather_dir.empty()) return dioko::synthetic_weather_source(cfg_.collect.episode_days);
  std::map<Weather, influent::WeatherSeries> files;
  for (auto w : cfg_.collect.weathers) {
    const auto p = weather_file(cfg_.weather_dir, w);
    files[w] = influent::load_weather(p, w);
    inputs_.push_back(p);
  }
  return [files](Weather w, std::uint64_t) { return files.at(w); };
}

influent::WeatherSeries Context::evaluation_weather(Weather w) {
  if (!cfg_.weather_dir.empty()) {
    const auto p = weather_file(cfg_.weather_dir, w);
    inputs_.push_back(p);
    return influent::load_weather(p, w);
  }
  influent::SynthConfig sc;
  sc.days = std::max(14.0, cfg_.evaluate.days);
  sc.seed = cfg_.evaluate.weather_seed;
  return influent::synthesize_weather(w, sc);
}

dioko::CollectConfig Context::collect_config(const std::vector<Weather>& weathers,
                                             bool noisy) const {
  dioko::CollectConfig cc;
  cc.n_samples = cfg_.collect.n_samples;
  cc.episode_days = cfg_.collect.episode_days;
  cc.weathers = weathers;
  cc.excitation.hold = cfg_.collect.excitation_hold;
  cc.excitation.noise_scale = cfg_.collect.excitation_noise;
  cc.seed = cfg_.seed;
  cc.horizon = cfg_.train.horizon;
  cc.noise = cfg_.noise.to_noise(noisy);
  cc.threads = cfg_.threads;
  return cc;
}

dioko::TrainConfig Context::train_config(std::uint64_t seed, double lr, int threads) const {
  dioko::TrainConfig tc;
  tc.epochs = cfg_.train.epochs;
  tc.batch = cfg_.train.batch;
  tc.lr = lr;
  tc.l2 = cfg_.train.l2;
  tc.seed = seed;
  tc.horizon = cfg_.train.horizon;
  tc.threads = threads;
  if (!quiet) {
    tc.on_epoch = [seed](const dioko::EpochRecord& r) {
      if (r.epoch == 1 || r.epoch % 10 == 0) {
        std::clog << "  seed " << seed << " epoch " << r.epoch << " train " << r.train << " val "
                  << r.val << std::endl;
      }
    };
  }
  return tc;
}

dioko::ModelDims Context::model_dims(int latent) const {
  dioko::ModelDims d;
  d.latent = latent;
  d.hidden = cfg_.train.hidden;
  return d;
}

empc::EMPCConfig Context::empc_config() const {
  empc::EMPCConfig e;
  e.horizon = cfg_.empc.horizon;
  e.R = cfg_.empc.R;
  e.penalize_boundary_move = cfg_.empc.penalize_boundary_move;
  e.solver = {cfg_.empc.tol, cfg_.empc.max_iter, false};
  return e;
}

empc::ClosedLoopConfig Context::loop_config(bool noisy) const {
  empc::ClosedLoopConfig c;
  c.days = cfg_.evaluate.days;
  c.noise = cfg_.noise.to_noise(noisy);
  return c;
}

const dioko::Dataset& Context::dataset() {
  if (!dataset_) {
    if (!cfg_.dataset.empty()) {
      dataset_ = dioko::Dataset::load(cfg_.dataset);
      inputs_.push_back(cfg_.dataset);
    } else {
      dataset_ = collect(*this, cfg_.collect.weathers, false);
    }
  }
  return *dataset_;
}

std::shared_ptr<const dioko::Model> Context::model() {
  if (!model_) {
    if (!cfg_.model.empty()) {
      model_ = std::make_shared<dioko::Model>(dioko::Model::load(cfg_.model));
      inputs_.push_back(cfg_.model);
    } else {
      const auto& ds = dataset();
      log("training model (seed " + std::to_string(cfg_.seed) + ")");
      auto res = dioko::train(dioko::Model(model_dims(cfg_.train.latent), cfg_.seed), ds,
                              train_config(cfg_.seed, cfg_.train.lr, cfg_.threads));
      model_ = std::make_shared<dioko::Model>(std::move(res.best));
    }
  }
  return model_;
}

// ---- settle ----------------------------------------------------------------

std::vector<SettleRow> settle_report(const PlantState& s) {
  const auto ref = reference_initial_state();
  const auto names = state_entry_names();
  std::vector<SettleRow> rows;
  for (std::size_t i = 0; i < kStateDim; ++i) {
    SettleRow r{i, names[i], s[i], ref[i], std::numeric_limits<double>::quiet_NaN()};
    if (ref[i] != 0.0) r.rel_dev = std::abs(s[i] - ref[i]) / std::abs(ref[i]);
    rows.push_back(r);
  }
  return rows;
}

void write_settle_report(std::ostream& out, const std::vector<SettleRow>& rows) {
  out << "index,name,value,reference,rel_dev\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.index << ',' << r.name << ',' << r.value << ',' << r.reference << ',';
    if (!std::isnan(r.rel_dev)) out << r.rel_dev;
    out << '\n';
  }
}

dioko::Dataset collect(Context& ctx, const std::vector<Weather>& weathers, bool noisy,
                       dioko::CollectLog* log) {
  const auto cc = ctx.collect_config(weathers, noisy);
  ctx.log("collecting " + std::to_string(cc.n_samples) + " samples" + (noisy ? " (noisy)" : ""));
  dioko::CollectLog local;
  auto ds = dioko::collect_dataset(ctx.params(), ctx.steady_state(), cc, ctx.weather_source(),
                                   log ? log : &local);
  for (const auto& m : (log ? log : &local)->discarded) ctx.log("  discarded: " + m);
  return ds;
}

// ---- evaluation ------------------------------------------------------------

const char* to_string(Method m) {
  switch (m) {
    case Method::Empc:
      return "dioko-empc";
    case Method::Constant:
      return "constant";
    case Method::Random:
      return "random";
  }
  return "?";
}

std::vector<EvalJob> standard_jobs(const Context& ctx, std::shared_ptr<const dioko::Model> model,
                                   bool noisy) {
  std::vector<EvalJob> jobs;
  for (auto w : ctx.config().evaluate.weathers) {
    jobs.push_back({Method::Empc, w, noisy, model, ""});
    jobs.push_back({Method::Constant, w, noisy, nullptr, ""});
    jobs.push_back({Method::Random, w, noisy, nullptr, ""});
  }
  return jobs;
}

namespace {

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

EvalRow run_job(Context& ctx, const EvalJob& job, const PlantState& x0,
                const influent::WeatherSeries& series,
                const std::optional<fs::path>& trajectory_dir) {
  const auto lc = ctx.loop_config(job.noisy);
  const std::string label = job.label.empty() ? to_string(job.method) : job.label;
  empc::ClosedLoopResult r;
  if (job.method == Method::Empc) {
    if (!job.model) throw std::invalid_argument("EMPC job without a model");
    auto ec = ctx.empc_config();
    if (!ctx.config().empc.dump_dir.empty()) {
      ec.dump_dir = fs::path(ctx.config().empc.dump_dir) /
                    (label + "_" + influent::to_string(job.weather) + (job.noisy ? "_noisy" : "_clean"));
      fs::create_directories(*ec.dump_dir);
    }
    empc::Controller ctl(job.model, ec);
    empc::EmpcPolicy p(ctl, label);
    r = empc::run_closed_loop(ctx.params(), x0, p, series, lc);
  } else if (job.method == Method::Constant) {
    empc::ConstantPolicy p(steady_state_actuation());
    r = empc::run_closed_loop(ctx.params(), x0, p, series, lc);
  } else {
    influent::ExcitationConfig ec;
    ec.hold = ctx.config().collect.excitation_hold;
    ec.noise_scale = ctx.config().collect.excitation_noise;
    ec.seed = ctx.config().evaluate.random_seed;
    const auto n = static_cast<std::size_t>(std::llround(lc.days / lc.sample_days));
    empc::SequencePolicy p(label, influent::excitation_sequence(ec, n));
    r = empc::run_closed_loop(ctx.params(), x0, p, series, lc);
  }

  EvalRow row;
  row.method = label;
  row.weather = influent::to_string(job.weather);
  row.plant = job.noisy ? "noisy" : "clean";
  row.stage_cost = r.cumulative_cost;
  row.report = r.report;
  row.mean_solve_ms = r.mean_solve_ms;
  row.median_solve_ms = r.median_solve_ms;
  row.max_kkt_residual = r.max_kkt_residual;
  row.fallbacks = r.fallbacks;
  row.aborted = r.aborted;
  row.abort_reason = r.abort_reason;
  if (trajectory_dir) {
    std::ofstream out(*trajectory_dir /
                      ("traj_" + label + "_" + row.weather + "_" + row.plant + ".csv"));
    empc::write_trajectory_csv(out, r);
  }
  return row;
}

}  // namespace

std::vector<EvalRow> run_jobs(Context& ctx, const std::vector<EvalJob>& jobs,
                              const std::optional<fs::path>& trajectory_dir) {
  const PlantState x0 = ctx.steady_state();
  std::map<Weather, influent::WeatherSeries> series;
  for (const auto& j : jobs) {
    if (!series.count(j.weather)) series[j.weather] = ctx.evaluation_weather(j.weather);
  }
  if (trajectory_dir) fs::create_directories(*trajectory_dir);

  std::vector<EvalRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      rows[i] = run_job(ctx, jobs[i], x0, series.at(jobs[i].weather), trajectory_dir);
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, ctx.config().threads));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, jobs.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& r : rows) {
    ctx.log("  " + r.method + " " + r.weather + " " + r.plant + ": stage cost " +
            std::to_string(r.stage_cost) + (r.aborted ? " ABORTED " + r.abort_reason : ""));
  }
  return rows;
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "method,weather,plant,stage_cost,eq,oci,sp,ae,pe,me,mean_solve_ms,median_solve_ms,"
         "max_kkt_residual,fallbacks,status\n"
      << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.method << ',' << r.weather << ',' << r.plant << ',' << r.stage_cost << ','
        << r.report.eq << ',' << r.report.oci << ',' << r.report.sp << ',' << r.report.ae << ','
        << r.report.pe << ',' << r.report.me << ',' << r.mean_solve_ms << ','
        << r.median_solve_ms << ',' << r.max_kkt_residual << ',' << r.fallbacks << ','
        << (r.aborted ? "aborted: " + sanitize(r.abort_reason) : std::string("ok")) << '\n';
  }
}

// ---- training reports ------------------------------------------------------

std::vector<LossBandRow> loss_band(const std::vector<std::vector<dioko::EpochRecord>>& curves) {
  std::vector<LossBandRow> out;
  if (curves.empty()) return out;
  std::size_t n = curves.front().size();
  for (const auto& c : curves) n = std::min(n, c.size());
  auto stats = [](const std::vector<double>& v, double& mean, double& sd, double& lo, double& hi) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    lo = *std::min_element(v.begin(), v.end());
    hi = *std::max_element(v.begin(), v.end());
  };
  for (std::size_t e = 0; e < n; ++e) {
    std::vector<double> tr, va;
    for (const auto& c : curves) {
      tr.push_back(c[e].train);
      va.push_back(c[e].val);
    }
    LossBandRow r;
    r.epoch = curves.front()[e].epoch;
    stats(tr, r.train_mean, r.train_std, r.train_min, r.train_max);
    stats(va, r.val_mean, r.val_std, r.val_min, r.val_max);
    out.push_back(r);
  }
  return out;
}

void write_loss_band_csv(std::ostream& out, const std::vector<LossBandRow>& rows) {
  out << "epoch,train_mean,train_std,train_min,train_max,val_mean,val_std,val_min,val_max\n"
      << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.train_mean << ',' << r.train_std << ',' << r.train_min << ','
        << r.train_max << ',' << r.val_mean << ',' << r.val_std << ',' << r.val_min << ','
        << r.val_max << '\n';
  }
}

void rank_sensitivity(std::vector<SensitivityRow>& rows) {
  auto key = [](const SensitivityRow& r) {
    return r.status == "ok" && std::isfinite(r.final_val) ? r.final_val
                                                          : std::numeric_limits<double>::infinity();
  };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const SensitivityRow& a, const SensitivityRow& b) { return key(a) < key(b); });
  SensitivityRow* worst = nullptr;
  for (auto& r : rows) {
    r.flag = r.status == "ok" ? "" : "diverged";
    if (r.status == "ok" && (!worst || r.final_val > worst->final_val)) worst = &r;
  }
  if (worst) worst->flag = "worst";
}

void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows) {
  out << "rank,factor,lr,latent,initial_val,final_val,best_val,status,flag,detail\n"
      << std::setprecision(10);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << i + 1 << ',' << r.factor << ',' << r.lr << ',' << r.latent << ',' << r.initial_val
        << ',' << r.final_val << ',' << r.best_val << ',' << r.status << ',' << r.flag << ','
        << sanitize(r.detail) << '\n';
  }
}

// ---- commands --------------------------------------------------------------

namespace {

fs::path run_dir(const Context& ctx, const std::string& command) {
  const auto dir = ctx.config().out / command;
  fs::create_directories(dir);
  return dir;
}

Manifest manifest_for(const Context& ctx, const std::string& command) {
  Manifest m;
  m.command = command;
  m.config = to_json(ctx.config());
  m.seeds["experiment"] = ctx.config().seed;
  m.seeds["evaluation_weather"] = ctx.config().evaluate.weather_seed;
  m.seeds["random_baseline"] = ctx.config().evaluate.random_seed;
  return m;
}

void finish(const Context& ctx, const fs::path& dir, Manifest m) {
  m.inputs = ctx.inputs();
  std::sort(m.inputs.begin(), m.inputs.end());
  m.inputs.erase(std::unique(m.inputs.begin(), m.inputs.end()), m.inputs.end());
  write_manifest(dir, m);
}

int report_failures(const std::vector<std::string>& failures) {
  for (const auto& f : failures) std::cerr << "failed: " << f << '\n';
  return failures.empty() ? 0 : 1;
}

template <typename Fn>
void write_file(const fs::path& dir, const std::string& name, Manifest& m, Fn&& fn) {
  std::ofstream out(dir / name);
  fn(out);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  m.outputs.push_back(name);
}

std::vector<std::string> aborted_runs(const std::vector<EvalRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (r.aborted) out.push_back(r.method + "/" + r.weather + "/" + r.plant + ": " + r.abort_reason);
  }
  return out;
}

}  // namespace

int cmd_settle(Context& ctx) {
  const auto dir = run_dir(ctx, "settle");
  auto m = manifest_for(ctx, "settle");
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = settle_to_steady_state(ctx.params(), steady_state_actuation(),
                                        constant_dry_influent());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_state(dir / "steady_state", s);
  m.outputs.push_back("steady_state.bin");
  m.outputs.push_back("steady_state.csv");
  const auto rows = settle_report(s);
  write_file(dir, "settle_report.csv", m, [&](std::ostream& o) { write_settle_report(o, rows); });

  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : rows) {
    if (!std::isnan(r.rel_dev) && r.rel_dev > worst) {
      worst = r.rel_dev;
      worst_name = r.name;
    }
  }
  ctx.log("settled in " + std::to_string(secs) + " s; largest relative deviation " +
          std::to_string(worst) + " (" + worst_name + ")");
  finish(ctx, dir, m);
  return 0;
}

int cmd_collect(Context& ctx) {
  const auto dir = run_dir(ctx, "collect");
  auto m = manifest_for(ctx, "collect");
  dioko::CollectLog log;
  const auto ds = collect(ctx, ctx.config().collect.weathers, false, &log);
  ds.save(dir / "dataset.bin");
  m.outputs.push_back("dataset.bin");
  write_file(dir, "dataset.csv", m,
             [&](std::ostream& o) { ds.write_csv(o, measurement_names()); });
  write_file(dir, "collect_summary.csv", m, [&](std::ostream& o) {
    o << "split,samples,windows\n";
    for (auto sp : {dioko::Split::Train, dioko::Split::Val, dioko::Split::Test}) {
      const auto [a, b] = ds.split_range(sp);
      o << dioko::to_string(sp) << ',' << b - a << ',' << ds.windows(sp).size() << '\n';
    }
    o << "episodes," << log.episodes_run << ",\n";
    o << "discarded," << log.discarded.size() << ",\n";
  });
  ctx.log("dataset: " + std::to_string(ds.n_train) + "/" + std::to_string(ds.n_val) + "/" +
          std::to_string(ds.n_test) + " samples");
  finish(ctx, dir, m);
  return 0;
}

int cmd_train(Context& ctx) {
  const auto dir = run_dir(ctx, "train");
  auto m = manifest_for(ctx, "train");
  const auto& cfg = ctx.config();
  const auto& ds = ctx.dataset();
  std::vector<std::string> failures;
  std::vector<std::vector<dioko::EpochRecord>> curves;
  std::ostringstream summary;
  summary << "seed,initial_val,final_val,best_val,best_epoch,status\n" << std::setprecision(10);

  for (int i = 0; i < cfg.train.seeds; ++i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    m.seeds["train_" + std::to_string(i)] = seed;
    ctx.log("training seed " + std::to_string(seed));
    try {
      auto res = dioko::train(dioko::Model(ctx.model_dims(cfg.train.latent), seed), ds,
                              ctx.train_config(seed, cfg.train.lr, cfg.threads));
      const std::string tag = "seed" + std::to_string(seed);
      res.best.save(dir / ("model_" + tag + ".bin"));
      m.outputs.push_back("model_" + tag + ".bin");
      if (i == 0) {
        res.best.save(dir / "model.bin");
        m.outputs.push_back("model.bin");
      }
      write_file(dir, "loss_" + tag + ".csv", m,
                 [&](std::ostream& o) { dioko::write_loss_curve_csv(o, res.curve); });
      const double final_val = res.curve.empty() ? res.initial_val : res.curve.back().val;
      const double best_val = res.best_epoch > 0 ? res.curve[res.best_epoch - 1].val : res.initial_val;
      summary << seed << ',' << res.initial_val << ',' << final_val << ',' << best_val << ','
              << res.best_epoch << ",ok\n";
      curves.push_back(std::move(res.curve));
    } catch (const dioko::TrainingDivergedError& e) {
      failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
      summary << seed << ",,,,,diverged\n";
    }
  }
  write_file(dir, "train_summary.csv", m, [&](std::ostream& o) { o << summary.str(); });
  write_file(dir, "loss_band.csv", m,
             [&](std::ostream& o) { write_loss_band_csv(o, loss_band(curves)); });
  m.failures = failures;
  finish(ctx, dir, m);
  return report_failures(failures);
}

int cmd_evaluate(Context& ctx) {
  const auto dir = run_dir(ctx, "evaluate");
  auto m = manifest_for(ctx, "evaluate");
  const auto model = ctx.model();
  const auto rows = run_jobs(ctx, standard_jobs(ctx, model, false), dir / "trajectories");
  write_file(dir, "evaluate.csv", m, [&](std::ostream& o) { write_eval_csv(o, rows); });
  write_file(dir, "evaluate.txt", m, [&](std::ostream& o) {
    for (const auto& r : rows) {
      o << r.method << " / " << r.weather << ": ";
      indices::write_report_text(o, r.report, r.stage_cost, r.mean_solve_ms);
    }
  });
  for (const auto& r : rows) {
    const auto t = "trajectories/traj_" + r.method + "_" + r.weather + "_" + r.plant + ".csv";
    m.outputs.push_back(t);
  }
  m.failures = aborted_runs(rows);
  finish(ctx, dir, m);
  return report_failures(m.failures);
}

int cmd_robustness(Context& ctx) {
  const auto dir = run_dir(ctx, "robustness");
  auto m = manifest_for(ctx, "robustness");
  const auto& cfg = ctx.config();
  m.seeds["noise"] = cfg.noise.seed;
  const auto clean_model = ctx.model();

  std::vector<EvalJob> jobs;
  if (!cfg.noise.enabled) {
    jobs = standard_jobs(ctx, clean_model, false);
  } else {
    const auto noisy_ds = collect(ctx, cfg.collect.weathers, true);
    ctx.log("training noisy-data model (seed " + std::to_string(cfg.seed) + ")");
    auto res = dioko::train(dioko::Model(ctx.model_dims(cfg.train.latent), cfg.seed), noisy_ds,
                            ctx.train_config(cfg.seed, cfg.train.lr, cfg.threads));
    res.best.save(dir / "model_noisy.bin");
    m.outputs.push_back("model_noisy.bin");
    const auto noisy_model = std::make_shared<const dioko::Model>(std::move(res.best));
    for (auto w : cfg.evaluate.weathers) {
      jobs.push_back({Method::Empc, w, false, clean_model, "dioko"});
      jobs.push_back({Method::Empc, w, true, clean_model, "dioko"});
      jobs.push_back({Method::Empc, w, true, noisy_model, "dioko-noisy"});
      jobs.push_back({Method::Constant, w, true, nullptr, ""});
      jobs.push_back({Method::Random, w, true, nullptr, ""});
    }
  }
  const auto rows = run_jobs(ctx, jobs);
  write_file(dir, "robustness.csv", m, [&](std::ostream& o) { write_eval_csv(o, rows); });
  if (cfg.noise.enabled) {
    write_file(dir, "robustness_summary.csv", m, [&](std::ostream& o) {
      o << "weather,clean_cost,noisy_cost,noisy_model_cost,rel_noisy,rel_noisy_model\n"
        << std::setprecision(10);
      for (std::size_t i = 0; i + 4 < rows.size(); i += 5) {
        const double c = rows[i].stage_cost, n = rows[i + 1].stage_cost,
                     nm = rows[i + 2].stage_cost;
        o << rows[i].weather << ',' << c << ',' << n << ',' << nm << ',' << (n - c) / c << ','
          << (nm - c) / c << '\n';
      }
    });
  }
  m.failures = aborted_runs(rows);
  finish(ctx, dir, m);
  return report_failures(m.failures);
}

int cmd_sensitivity(Context& ctx) {
  const auto dir = run_dir(ctx, "sensitivity");
  auto m = manifest_for(ctx, "sensitivity");
  const auto& cfg = ctx.config();
  const auto& ds = ctx.dataset();

  struct Run {
    std::string factor;
    double lr;
    int latent;
  };
  std::vector<Run> runs;
  for (double lr : cfg.sensitivity.lr) runs.push_back({"lr", lr, cfg.train.latent});
  for (int p : cfg.sensitivity.latent) runs.push_back({"latent", cfg.train.lr, p});

  std::vector<SensitivityRow> rows;
  for (const auto& run : runs) {
    std::ostringstream name;
    name << run.factor << '_' << (run.factor == "lr" ? run.lr : run.latent);
    ctx.log("sensitivity run " + name.str());
    SensitivityRow row{run.factor, run.lr, run.latent, 0.0,
                       std::numeric_limits<double>::quiet_NaN(),
                       std::numeric_limits<double>::quiet_NaN(), "ok", "", ""};
    std::vector<dioko::EpochRecord> curve;
    auto tc = ctx.train_config(cfg.seed, run.lr, cfg.threads);
    auto user_cb = tc.on_epoch;
    tc.on_epoch = [&](const dioko::EpochRecord& r) {
      curve.push_back(r);
      if (user_cb) user_cb(r);
    };
    try {
      auto res = dioko::train(dioko::Model(ctx.model_dims(run.latent), cfg.seed), ds, tc);
      row.initial_val = res.initial_val;
      row.final_val = res.curve.empty() ? res.initial_val : res.curve.back().val;
      row.best_val = res.best_epoch > 0 ? res.curve[res.best_epoch - 1].val : res.initial_val;
      if (!std::isfinite(row.final_val)) {
        row.status = "diverged";
        row.detail = "non-finite validation loss";
      }
    } catch (const dioko::TrainingDivergedError& e) {
      row.status = "diverged";
      row.detail = e.what();
      if (!curve.empty()) row.final_val = curve.back().val;
    }
    write_file(dir, "loss_" + name.str() + ".csv", m,
               [&](std::ostream& o) { dioko::write_loss_curve_csv(o, curve); });
    rows.push_back(row);
  }
  rank_sensitivity(rows);
  write_file(dir, "sensitivity.csv", m, [&](std::ostream& o) { write_sensitivity_csv(o, rows); });
  finish(ctx, dir, m);
  return 0;
}

int cmd_generalize(Context& ctx) {
  const auto dir = run_dir(ctx, "generalize");
  auto m = manifest_for(ctx, "generalize");
  const auto& cfg = ctx.config();
  const auto all_model = ctx.model();
  const auto dry_ds = collect(ctx, {Weather::Dry}, false);
  ctx.log("training dry-only model (seed " + std::to_string(cfg.seed) + ")");
  auto res = dioko::train(dioko::Model(ctx.model_dims(cfg.train.latent), cfg.seed), dry_ds,
                          ctx.train_config(cfg.seed, cfg.train.lr, cfg.threads));
  res.best.save(dir / "model_dry.bin");
  m.outputs.push_back("model_dry.bin");
  const auto dry_model = std::make_shared<const dioko::Model>(std::move(res.best));

  std::vector<EvalJob> jobs;
  for (auto w : cfg.evaluate.weathers) {
    jobs.push_back({Method::Empc, w, false, dry_model, "dioko-dry"});
    jobs.push_back({Method::Empc, w, false, all_model, "dioko"});
    jobs.push_back({Method::Constant, w, false, nullptr, ""});
    jobs.push_back({Method::Random, w, false, nullptr, ""});
  }
  const auto rows = run_jobs(ctx, jobs);
  write_file(dir, "generalize_runs.csv", m, [&](std::ostream& o) { write_eval_csv(o, rows); });
  write_file(dir, "generalize.csv", m, [&](std::ostream& o) {
    o << "model,weather,stage_cost,eq,oci,constant_cost,random_cost,rel_constant,rel_random\n"
      << std::setprecision(10);
    for (std::size_t i = 0; i + 3 < rows.size(); i += 4) {
      const double cc = rows[i + 2].stage_cost, rc = rows[i + 3].stage_cost;
      for (std::size_t k = 0; k < 2; ++k) {
        const auto& r = rows[i + k];
        o << r.method << ',' << r.weather << ',' << r.stage_cost << ',' << r.report.eq << ','
          << r.report.oci << ',' << cc << ',' << rc << ',' << (r.stage_cost - cc) / cc << ','
          << (r.stage_cost - rc) / rc << '\n';
      }
    }
  });
  m.failures = aborted_runs(rows);
  finish(ctx, dir, m);
  return report_failures(m.failures);
}

}  // namespace wwtp::harness
