#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wwtp/plant/plant.hpp"

namespace wwtp::influent {

enum class Weather { Dry, Rain, Storm };

const char* to_string(Weather w);
Weather weather_from_string(const std::string& s);
inline constexpr Weather kAllWeathers[] = {Weather::Dry, Weather::Rain, Weather::Storm};

class WeatherSeries {
 public:
  WeatherSeries() = default;
  WeatherSeries(Weather label, std::vector<InfluentRecord> records);

  Weather label() const { return label_; }
  const std::vector<InfluentRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  double start_time() const { return records_.front().time; }
  double end_time() const { return records_.back().time; }
  double span_days() const { return end_time() - start_time(); }

  /// Zero-order hold: the latest record at or before t. Throws std::out_of_range outside
  /// [start_time, end_time].
  const InfluentRecord& at(double t) const;

 private:
  Weather label_ = Weather::Dry;
  std::vector<InfluentRecord> records_;
};

inline const InfluentRecord& disturbance_at(const WeatherSeries& s, double t) { return s.at(t); }

class InfluentFormatError : public std::runtime_error {
 public:
  InfluentFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Parse whitespace- or comma-separated rows of: time, Q0, 13 concentrations (species
/// order). Lines that are blank or start with '#' are skipped.
WeatherSeries parse_weather(std::istream& in, Weather label);
WeatherSeries load_weather(const std::filesystem::path& path, Weather label);
void write_weather(std::ostream& out, const WeatherSeries& series);

struct SynthConfig {
  double days = 14.0;
  double sample_days = 15.0 / 1440.0;
  std::uint64_t seed = 2024;
};

/// Diurnal influent profiles around the constant dry-weather average. Rain and storm add
/// hydraulic events on top of the dry profile; each profile has an event inside its first
/// two days and further events in the second week.
WeatherSeries synthesize_weather(Weather w, const SynthConfig& cfg = {});

// ---- excitation ------------------------------------------------------------

struct ExcitationConfig {
  std::size_t hold = 20;
  double noise_scale = 0.05;  // per-channel standard deviation relative to the base value
  std::uint64_t seed = 1;
};

/// Piecewise-constant uniform base values re-drawn every `hold` steps, plus Gaussian
/// perturbations; the sum is clipped to the input box.
std::vector<ControlInput> excitation_sequence(const ExcitationConfig& cfg, std::size_t n_steps);

void write_excitation_csv(std::ostream& out, const std::vector<ControlInput>& seq);

}  // namespace wwtp::influent
