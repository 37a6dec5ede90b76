#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "harness/config.hpp"
#include "wwtp/dioko/training.hpp"
#include "wwtp/empc/empc.hpp"

namespace wwtp::harness {

/// Resolves the shared inputs of an experiment (plant, steady state, weather, dataset, model)
/// and caches them for the lifetime of one command.
class Context {
 public:
  explicit Context(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const PlantParams& params() const { return params_; }

  /// Loaded from config.state, or settled from the tabulated initial condition.
  const PlantState& steady_state();
  dioko::WeatherSource weather_source();
  influent::WeatherSeries evaluation_weather(influent::Weather w);

  dioko::CollectConfig collect_config(const std::vector<influent::Weather>& weathers,
                                      bool noisy) const;
  dioko::TrainConfig train_config(std::uint64_t seed, double lr, int threads) const;
  dioko::ModelDims model_dims(int latent) const;
  empc::EMPCConfig empc_config() const;
  empc::ClosedLoopConfig loop_config(bool noisy) const;

  /// config.dataset if set, otherwise an all-weather clean collection (cached).
  const dioko::Dataset& dataset();
  /// config.model if set, otherwise trained on dataset() with config.seed (cached).
  std::shared_ptr<const dioko::Model> model();

  /// Files read by this command, for the manifest.
  const std::vector<std::filesystem::path>& inputs() const { return inputs_; }

  void log(const std::string& msg) const;
  bool quiet = false;

 private:
  ExperimentConfig cfg_;
  PlantParams params_;
  std::optional<PlantState> steady_;
  std::optional<dioko::Dataset> dataset_;
  std::shared_ptr<const dioko::Model> model_;
  std::vector<std::filesystem::path> inputs_;
};

// ---- building blocks -------------------------------------------------------

struct SettleRow {
  std::size_t index = 0;
  std::string name;
  double value = 0.0;
  double reference = 0.0;
  double rel_dev = 0.0;
};

/// Per-state relative deviation from the tabulated reference state.
std::vector<SettleRow> settle_report(const PlantState& s);
void write_settle_report(std::ostream& out, const std::vector<SettleRow>& rows);

dioko::Dataset collect(Context& ctx, const std::vector<influent::Weather>& weathers, bool noisy,
                       dioko::CollectLog* log = nullptr);

struct EvalRow {
  std::string method;
  std::string weather;
  std::string plant = "clean";
  double stage_cost = 0.0;
  indices::WindowReport report;
  double mean_solve_ms = 0.0;
  double median_solve_ms = 0.0;
  double max_kkt_residual = 0.0;
  std::size_t fallbacks = 0;
  bool aborted = false;
  std::string abort_reason;
};

enum class Method { Empc, Constant, Random };
const char* to_string(Method m);

struct EvalJob {
  Method method = Method::Empc;
  influent::Weather weather = influent::Weather::Dry;
  bool noisy = false;
  std::shared_ptr<const dioko::Model> model;  // Empc only
  std::string label;                           // defaults to the method name
};

/// Runs the jobs (in parallel when config.threads > 1) and returns rows in job order. Writes a
/// trajectory CSV per job when `trajectory_dir` is given.
std::vector<EvalRow> run_jobs(Context& ctx, const std::vector<EvalJob>& jobs,
                              const std::optional<std::filesystem::path>& trajectory_dir = {});

/// The three methods on every configured evaluation weather.
std::vector<EvalJob> standard_jobs(const Context& ctx, std::shared_ptr<const dioko::Model> model,
                                   bool noisy);

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);

struct LossBandRow {
  int epoch = 0;
  double train_mean = 0.0, train_std = 0.0, train_min = 0.0, train_max = 0.0;
  double val_mean = 0.0, val_std = 0.0, val_min = 0.0, val_max = 0.0;
};
std::vector<LossBandRow> loss_band(const std::vector<std::vector<dioko::EpochRecord>>& curves);
void write_loss_band_csv(std::ostream& out, const std::vector<LossBandRow>& rows);

struct SensitivityRow {
  std::string factor;  // "lr" or "latent"
  double lr = 0.0;
  int latent = 0;
  double initial_val = 0.0;
  double final_val = 0.0;
  double best_val = 0.0;
  std::string status;  // ok | diverged
  std::string flag;    // diverged | worst | ""
  std::string detail;
};
/// Sorts by final validation loss (diverged runs last) and marks the worst finite run.
void rank_sensitivity(std::vector<SensitivityRow>& rows);
void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows);

// ---- commands --------------------------------------------------------------
// Each writes into <out>/<command>/ including a manifest.json and returns the process exit code.

int cmd_settle(Context& ctx);
int cmd_collect(Context& ctx);
int cmd_train(Context& ctx);
int cmd_evaluate(Context& ctx);
int cmd_robustness(Context& ctx);
int cmd_sensitivity(Context& ctx);
int cmd_generalize(Context& ctx);

}  // namespace wwtp::harness
