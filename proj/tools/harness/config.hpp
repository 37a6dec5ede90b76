#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wwtp/dioko/dataset.hpp"
#include "wwtp/influent/influent.hpp"

namespace wwtp::harness {

struct CollectSettings {
  std::size_t n_samples = 10000;
  double episode_days = 14.0;
  std::vector<influent::Weather> weathers{influent::Weather::Dry, influent::Weather::Rain,
                                          influent::Weather::Storm};
  std::size_t excitation_hold = 20;
  double excitation_noise = 0.05;
};

struct TrainSettings {
  int epochs = 60;
  int batch = 128;
  double lr = 1e-3;
  double l2 = 0.1;
  int latent = 60;
  std::vector<int> hidden{128, 128};
  int horizon = 30;
  int seeds = 1;
};

struct EvaluateSettings {
  double days = 2.0;
  std::vector<influent::Weather> weathers{influent::Weather::Dry, influent::Weather::Rain,
                                          influent::Weather::Storm};
  std::uint64_t weather_seed = 99;
  std::uint64_t random_seed = 4242;
};

struct EmpcSettings {
  int horizon = 30;
  std::array<double, 2> R{1.2e-8, 1.77733e-5};
  bool penalize_boundary_move = false;
  double tol = 1e-8;
  int max_iter = 5000;
  std::string dump_dir;  // per-step QP dumps when non-empty
};

struct NoiseSettings {
  bool enabled = true;
  double process_rel = 0.001;
  double measurement_rel = 0.0005;
  std::uint64_t seed = 7;

  dioko::NoiseConfig to_noise(bool on) const { return {on && enabled, process_rel, measurement_rel, seed}; }
};

struct SensitivitySettings {
  std::vector<double> lr{1e-5, 1e-4, 1e-3, 1e-2};
  std::vector<int> latent{30, 45, 60};
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  bool paper_scale = false;
  int threads = 1;
  std::filesystem::path out = "runs";

  // optional inputs; empty means "produce it"
  std::filesystem::path state;
  std::filesystem::path dataset;
  std::filesystem::path model;
  std::filesystem::path weather_dir;  // dry.txt, rain.txt, storm.txt

  nlohmann::json plant = nlohmann::json::object();
  CollectSettings collect;
  TrainSettings train;
  EvaluateSettings evaluate;
  EmpcSettings empc;
  NoiseSettings noise;
  SensitivitySettings sensitivity;

  /// Full-size settings: 1e5 samples, 400 epochs, 14-day evaluation.
  void apply_paper_scale();
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Overlays the keys present in `j`; unknown keys throw std::invalid_argument.
void merge_json(ExperimentConfig& c, const nlohmann::json& j);

inline constexpr const char* kEnvPrefix = "WWTP_";

/// Environment overrides: every leaf key path of the config, upper-cased and joined with '_',
/// behind the WWTP_ prefix (WWTP_TRAIN_EPOCHS=5, WWTP_EVALUATE_DAYS=1). Values are parsed as
/// JSON when possible and taken as strings otherwise. Returns the variables that matched.
std::vector<std::string> apply_env(ExperimentConfig& c,
                                   const std::function<const char*(const char*)>& getenv);

/// Defaults, then the paper-scale preset, then the config file, then the environment.
ExperimentConfig load_config(const std::filesystem::path& file, bool paper_scale,
                             const std::function<const char*(const char*)>& getenv);

}  // namespace wwtp::harness
