#include "wwtp/influent/influent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace wwtp::influent {

const char* to_string(Weather w) {
  switch (w) {
    case Weather::Dry:
      return "dry";
    case Weather::Rain:
      return "rain";
    case Weather::Storm:
      return "storm";
  }
  return "?";
}

Weather weather_from_string(const std::string& s) {
  if (s == "dry") return Weather::Dry;
  if (s == "rain" || s == "rainy") return Weather::Rain;
  if (s == "storm" || s == "stormy") return Weather::Storm;
  throw std::invalid_argument("unknown weather label '" + s + "'");
}

WeatherSeries::WeatherSeries(Weather label, std::vector<InfluentRecord> records)
    : label_(label), records_(std::move(records)) {
  if (records_.empty()) throw std::invalid_argument("weather series is empty");
  for (std::size_t k = 0; k < records_.size(); ++k) {
    records_[k].validate();
    if (k > 0 && !(records_[k].time > records_[k - 1].time)) {
      throw std::invalid_argument("weather series timestamps must strictly increase (record " +
                                  std::to_string(k) + ")");
    }
  }
}

const InfluentRecord& WeatherSeries::at(double t) const {
  constexpr double eps = 1e-9;
  if (records_.empty() || t < start_time() - eps || t > end_time() + eps) {
    std::ostringstream msg;
    msg << "time " << t << " outside influent span";
    if (!records_.empty()) msg << " [" << start_time() << ", " << end_time() << "]";
    throw std::out_of_range(msg.str());
  }
  auto it = std::upper_bound(records_.begin(), records_.end(), t + eps,
                             [](double v, const InfluentRecord& r) { return v < r.time; });
  return *std::prev(it);
}

WeatherSeries parse_weather(std::istream& in, Weather label) {
  std::vector<InfluentRecord> rows;
  std::string line;
  std::size_t line_no = 0;
  double prev_time = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    const auto first = line.find_first_not_of(' ');
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream fields(line);
    std::vector<double> values;
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw InfluentFormatError(line_no, "field '" + tok + "' is not numeric");
      }
    }
    if (values.size() != 15) {
      throw InfluentFormatError(line_no, "expected 15 fields (time, Q0, 13 concentrations), got " +
                                             std::to_string(values.size()));
    }
    InfluentRecord r;
    r.time = values[0];
    r.q0 = values[1];
    std::copy(values.begin() + 2, values.end(), r.z0.begin());
    try {
      r.validate();
    } catch (const std::invalid_argument& e) {
      throw InfluentFormatError(line_no, e.what());
    }
    if (!(r.time > prev_time)) {
      throw InfluentFormatError(line_no, "time is not strictly increasing");
    }
    prev_time = r.time;
    rows.push_back(r);
  }
  if (rows.empty()) throw InfluentFormatError(line_no, "no data rows");
  return WeatherSeries(label, std::move(rows));
}

WeatherSeries load_weather(const std::filesystem::path& path, Weather label) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open influent file " + path.string());
  return parse_weather(in, label);
}

void write_weather(std::ostream& out, const WeatherSeries& series) {
  out << "# weather=" << to_string(series.label()) << "\n# time[d] Q0[m3/d]";
  for (std::size_t s = 0; s < kNumSpecies; ++s) out << ' ' << species_names()[s];
  out << '\n' << std::setprecision(17);
  for (const auto& r : series.records()) {
    out << r.time << ' ' << r.q0;
    for (double z : r.z0) out << ' ' << z;
    out << '\n';
  }
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Normalized diurnal shapes with unit mean.
double flow_shape(double t) {
  return 1.0 + 0.28 * std::sin(kTwoPi * (t - 0.30)) + 0.08 * std::sin(2.0 * kTwoPi * (t - 0.15));
}
double load_shape(double t) {
  return 1.0 + 0.32 * std::sin(kTwoPi * (t - 0.38)) + 0.10 * std::sin(2.0 * kTwoPi * (t - 0.22));
}
double weekend_factor(double t) {
  const double day = std::fmod(t, 7.0);
  return day >= 5.0 ? 0.9 : 1.0;
}

struct Event {
  double start;     // days
  double duration;  // days
  double extra_q;   // m3/day added at the peak
  double flush;     // particulate first-flush multiplier at the event start
};

// Smooth bump on [start, start + duration] with unit peak.
double bump(double t, const Event& e) {
  if (t < e.start || t > e.start + e.duration) return 0.0;
  const double s = (t - e.start) / e.duration;
  return std::pow(std::sin(std::numbers::pi * s), 2);
}

std::vector<Event> events_for(Weather w) {
  switch (w) {
    case Weather::Dry:
      return {};
    case Weather::Rain:
      return {{0.9, 1.0, 17000.0, 1.0}, {7.8, 2.6, 20000.0, 1.0}};
    case Weather::Storm:
      return {{1.05, 0.35, 35000.0, 2.2}, {8.6, 0.3, 33000.0, 2.4}, {10.4, 0.45, 38000.0, 1.8}};
  }
  return {};
}

}  // namespace

WeatherSeries synthesize_weather(Weather w, const SynthConfig& cfg) {
  if (!(cfg.days > 0.0) || !(cfg.sample_days > 0.0)) {
    throw std::invalid_argument("synthesize_weather: days and sample_days must be > 0");
  }
  const InfluentRecord base = constant_dry_influent();
  const auto events = events_for(w);
  const auto n = static_cast<std::size_t>(std::llround(cfg.days / cfg.sample_days));

  // AR(1) multiplicative noise, shared by flow and loads
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double noise_q = 0.0, noise_l = 0.0;
  constexpr double phi = 0.95, sigma = 0.01;

  std::vector<InfluentRecord> rows;
  rows.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * cfg.sample_days;
    noise_q = phi * noise_q + sigma * gauss(rng);
    noise_l = phi * noise_l + sigma * gauss(rng);

    const double dry_q = base.q0 * flow_shape(t) * weekend_factor(t) * (1.0 + noise_q);
    const double load_factor = load_shape(t) * weekend_factor(t) * (1.0 + noise_l);
    double extra_q = 0.0, flush = 1.0;
    for (const auto& e : events) {
      const double b = bump(t, e);
      extra_q += e.extra_q * b;
      // first flush peaks in the first third of the event
      const double s = (t - e.start) / e.duration;
      if (s >= 0.0 && s <= 1.0) flush *= 1.0 + (e.flush - 1.0) * std::exp(-std::pow((s - 0.2) / 0.15, 2));
    }

    InfluentRecord r;
    r.time = t;
    r.q0 = dry_q + extra_q;
    // dry-weather loads are carried by the dry flow and diluted by the event flow
    const double dilution = dry_q / r.q0;
    for (std::size_t s = 0; s < kNumSpecies; ++s) {
      double z = base.z0[s];
      if (s == S_I || s == S_ALK) {
        z *= dilution;
      } else {
        z *= load_factor / (flow_shape(t) * (1.0 + noise_q)) * dilution;
      }
      if (s == X_I || s == X_S || s == X_BH || s == X_ND) z *= flush;
      r.z0[s] = std::max(0.0, z);
    }
    rows.push_back(r);
  }
  return WeatherSeries(w, std::move(rows));
}

std::vector<ControlInput> excitation_sequence(const ExcitationConfig& cfg, std::size_t n_steps) {
  if (cfg.hold < 1) throw std::invalid_argument("excitation: hold must be >= 1");
  if (!(cfg.noise_scale >= 0.0)) throw std::invalid_argument("excitation: noise scale must be >= 0");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uq(0.0, ControlInput::kQaMax);
  std::uniform_real_distribution<double> uk(0.0, ControlInput::kKla5Max);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<ControlInput> out;
  out.reserve(n_steps);
  ControlInput base;
  for (std::size_t k = 0; k < n_steps; ++k) {
    if (k % cfg.hold == 0) {
      base.q_a = uq(rng);
      base.kla5 = uk(rng);
    }
    ControlInput u = base;
    if (cfg.noise_scale > 0.0) {
      u.q_a += cfg.noise_scale * base.q_a * gauss(rng);
      u.kla5 += cfg.noise_scale * base.kla5 * gauss(rng);
    }
    out.push_back(u.clipped());
  }
  return out;
}

void write_excitation_csv(std::ostream& out, const std::vector<ControlInput>& seq) {
  out << "step,Qa,KLa5\n" << std::setprecision(10);
  for (std::size_t k = 0; k < seq.size(); ++k) {
    out << k << ',' << seq[k].q_a << ',' << seq[k].kla5 << '\n';
  }
}

}  // namespace wwtp::influent
