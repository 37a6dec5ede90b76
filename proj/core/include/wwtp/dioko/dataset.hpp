#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "wwtp/dioko/model.hpp"
#include "wwtp/indices/indices.hpp"
#include "wwtp/influent/influent.hpp"
#include "wwtp/plant/plant.hpp"

namespace wwtp::dioko {

enum class Split { Train, Val, Test };
const char* to_string(Split s);

/// Per-step records stored column-wise (one column per sample, in time order). Windows of
/// horizon+1 consecutive records are anchored at every sample whose window stays inside its
/// episode; a window belongs to the split of its anchor sample. Splits cover the samples
/// chronologically.
struct Dataset {
  Matrix y;  // ny x N
  Matrix u;  // nu x N (raw units)
  Matrix d;  // nd x N
  Matrix c;  // 1 x N
  std::vector<int> episode;
  std::vector<double> time;  // days since episode start
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  int horizon = 30;

  std::size_t size() const { return static_cast<std::size_t>(y.cols()); }
  void validate() const;
  /// Splits the N samples 80/10/10 (floor for train and val).
  void set_default_split();
  std::pair<std::size_t, std::size_t> split_range(Split s) const;
  /// Anchor indices of the windows in a split, for the given horizon (default: the stored one).
  std::vector<std::size_t> windows(Split s, int horizon = -1) const;

  void save(const std::filesystem::path& path) const;
  static Dataset load(const std::filesystem::path& path);
  /// Header: episode,time,split,y..,u..,d..,c
  void write_csv(std::ostream& out, const std::vector<std::string>& y_names = {}) const;

  bool operator==(const Dataset& o) const;
};

struct SampleWindow {
  const Dataset* data = nullptr;
  std::size_t start = 0;
  int horizon = 30;
};

struct NoiseConfig {
  bool enabled = false;
  double process_rel = 0.001;       // std relative to the reference state, per state entry
  double measurement_rel = 0.0005;  // std relative to the reference state, per measured entry
  std::uint64_t seed = 7;
};

struct CollectConfig {
  std::size_t n_samples = 10000;
  double episode_days = 14.0;
  double sample_days = 15.0 / 1440.0;
  std::vector<influent::Weather> weathers{influent::Weather::Dry, influent::Weather::Rain,
                                          influent::Weather::Storm};
  influent::ExcitationConfig excitation{};
  std::uint64_t seed = 1;
  int horizon = 30;
  NoiseConfig noise{};
  int threads = 1;
  indices::IndexWeights weights{};
  double divergence_bound = 1e7;
};

using WeatherSource = std::function<influent::WeatherSeries(influent::Weather, std::uint64_t seed)>;
/// Synthetic series covering `days` (plus one record), seeded per episode.
WeatherSource synthetic_weather_source(double days);

struct CollectLog {
  std::size_t episodes_run = 0;
  std::vector<std::string> discarded;  // one message per discarded episode
};

/// Simulates episodes from `initial` under random weather and excitation inputs until
/// `n_samples` records exist.
Dataset collect_dataset(const PlantParams& params, const PlantState& initial,
                        const CollectConfig& cfg, const WeatherSource& weather,
                        CollectLog* log = nullptr);

// Additive Gaussian noise on plant states and measurements, scaled by a reference state.
class PlantNoise {
 public:
  PlantNoise(const NoiseConfig& cfg, const PlantState& reference);
  void perturb_state(PlantState& s);
  void perturb_measurement(MeasurementVector& y);
  bool enabled() const { return cfg_.enabled; }

 private:
  NoiseConfig cfg_;
  StateVector proc_std_{};
  MeasurementVector meas_std_{};
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace wwtp::dioko
