#include "wwtp/dioko/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace wwtp::dioko {

const char* to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

void Dataset::validate() const {
  const auto n = y.cols();
  if (u.cols() != n || d.cols() != n || c.cols() != n || c.rows() != 1 ||
      episode.size() != static_cast<std::size_t>(n) || time.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("dataset: column counts differ");
  }
  if (n_train + n_val + n_test != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("dataset: split sizes do not add up to the sample count");
  }
  if (horizon < 0) throw std::invalid_argument("dataset: horizon must be >= 0");
}

void Dataset::set_default_split() {
  const std::size_t n = size();
  n_train = n * 8 / 10;
  n_val = n / 10;
  n_test = n - n_train - n_val;
}

std::pair<std::size_t, std::size_t> Dataset::split_range(Split s) const {
  switch (s) {
    case Split::Train:
      return {0, n_train};
    case Split::Val:
      return {n_train, n_train + n_val};
    case Split::Test:
      return {n_train + n_val, n_train + n_val + n_test};
  }
  return {0, 0};
}

std::vector<std::size_t> Dataset::windows(Split s, int h) const {
  if (h < 0) h = horizon;
  const auto [a, b] = split_range(s);
  std::vector<std::size_t> out;
  const auto hs = static_cast<std::size_t>(h);
  for (std::size_t k = a; k < b; ++k) {
    if (k + hs < size() && episode[k + hs] == episode[k]) out.push_back(k);
  }
  return out;
}

void Dataset::save(const std::filesystem::path& path) const {
  validate();
  nn::ArrayMap a;
  a["y"] = y;
  a["u"] = u;
  a["d"] = d;
  a["c"] = c;
  Matrix ep(1, static_cast<Eigen::Index>(size())), t(1, static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) {
    ep(0, static_cast<Eigen::Index>(k)) = episode[k];
    t(0, static_cast<Eigen::Index>(k)) = time[k];
  }
  a["episode"] = ep;
  a["time"] = t;
  Matrix split(1, 3);
  split << static_cast<double>(n_train), static_cast<double>(n_val), static_cast<double>(n_test);
  a["split"] = split;
  a["horizon"] = Matrix::Constant(1, 1, horizon);
  nn::save_container(path, a);
}

Dataset Dataset::load(const std::filesystem::path& path) {
  const auto a = nn::load_container(path);
  Dataset ds;
  ds.y = nn::require(a, "y");
  ds.u = nn::require(a, "u");
  ds.d = nn::require(a, "d");
  ds.c = nn::require(a, "c");
  const Matrix& ep = nn::require(a, "episode");
  const Matrix& t = nn::require(a, "time");
  for (Eigen::Index k = 0; k < ep.size(); ++k) ds.episode.push_back(static_cast<int>(ep(0, k)));
  ds.time.assign(t.data(), t.data() + t.size());
  const Matrix& split = nn::require(a, "split");
  ds.n_train = static_cast<std::size_t>(split(0, 0));
  ds.n_val = static_cast<std::size_t>(split(0, 1));
  ds.n_test = static_cast<std::size_t>(split(0, 2));
  ds.horizon = static_cast<int>(nn::require(a, "horizon")(0, 0));
  ds.validate();
  return ds;
}

void Dataset::write_csv(std::ostream& out, const std::vector<std::string>& y_names) const {
  out << "episode,time,split";
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    out << ',' << (static_cast<std::size_t>(i) < y_names.size() ? y_names[i] : "y" + std::to_string(i));
  }
  for (Eigen::Index i = 0; i < u.rows(); ++i) out << ",u" << i;
  for (Eigen::Index i = 0; i < d.rows(); ++i) out << ",d" << i;
  out << ",c\n" << std::setprecision(12);
  for (std::size_t k = 0; k < size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const char* tag = k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");
    out << episode[k] << ',' << time[k] << ',' << tag;
    for (Eigen::Index i = 0; i < y.rows(); ++i) out << ',' << y(i, col);
    for (Eigen::Index i = 0; i < u.rows(); ++i) out << ',' << u(i, col);
    for (Eigen::Index i = 0; i < d.rows(); ++i) out << ',' << d(i, col);
    out << ',' << c(0, col) << '\n';
  }
}

bool Dataset::operator==(const Dataset& o) const {
  auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(y, o.y) && same(u, o.u) && same(d, o.d) && same(c, o.c) && episode == o.episode &&
         time == o.time && n_train == o.n_train && n_val == o.n_val && n_test == o.n_test &&
         horizon == o.horizon;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PlantNoise::PlantNoise(const NoiseConfig& cfg, const PlantState& reference)
    : cfg_(cfg), rng_(cfg.seed) {
  const auto& idx = measurement_indices();
  for (std::size_t i = 0; i < kStateDim; ++i) proc_std_[i] = cfg.process_rel * reference[i];
  for (std::size_t i = 0; i < kNumMeasurements; ++i) {
    meas_std_[i] = cfg.measurement_rel * reference[idx[i]];
  }
}

void PlantNoise::perturb_state(PlantState& s) {
  if (!cfg_.enabled) return;
  for (std::size_t i = 0; i < kStateDim; ++i) {
    s[i] = std::max(0.0, s[i] + proc_std_[i] * gauss_(rng_));
  }
}

void PlantNoise::perturb_measurement(MeasurementVector& y) {
  if (!cfg_.enabled) return;
  for (std::size_t i = 0; i < kNumMeasurements; ++i) {
    y[i] = std::max(0.0, y[i] + meas_std_[i] * gauss_(rng_));
  }
}

WeatherSource synthetic_weather_source(double days) {
  return [days](influent::Weather w, std::uint64_t seed) {
    influent::SynthConfig cfg;
    cfg.days = days;
    cfg.seed = seed;
    return influent::synthesize_weather(w, cfg);
  };
}

namespace {

struct EpisodeRecords {
  std::vector<MeasurementVector> y;
  std::vector<ControlInput> u;
  std::vector<InfluentRecord> d;
  std::vector<double> c;
  std::vector<double> t;
  std::string failure;
};

EpisodeRecords run_episode(const PlantParams& params, const PlantState& initial,
                           const CollectConfig& cfg, const WeatherSource& weather,
                           std::size_t episode) {
  const std::uint64_t es = mix_seed(cfg.seed, episode);
  std::mt19937_64 pick(es);
  const auto w = cfg.weathers[std::uniform_int_distribution<std::size_t>(
      0, cfg.weathers.size() - 1)(pick)];
  const auto series = weather(w, mix_seed(es, 1));
  auto exc_cfg = cfg.excitation;
  exc_cfg.seed = mix_seed(es, 2);
  const auto n_steps = static_cast<std::size_t>(std::llround(cfg.episode_days / cfg.sample_days));
  const auto inputs = influent::excitation_sequence(exc_cfg, n_steps);
  auto noise_cfg = cfg.noise;
  noise_cfg.seed = mix_seed(cfg.noise.seed, episode);
  PlantNoise noise(noise_cfg, initial);

  EpisodeRecords r;
  PlantState s = initial;
  s.set_time(0.0);
  try {
    for (std::size_t k = 0; k < n_steps; ++k) {
      const double t = static_cast<double>(k) * cfg.sample_days;
      auto y = measure(s);
      noise.perturb_measurement(y);
      const auto& d = series.at(t);
      const auto snap = indices::stage_cost(y, inputs[k], d, params, cfg.weights);
      r.y.push_back(y);
      r.u.push_back(inputs[k]);
      r.d.push_back(d);
      r.c.push_back(snap.stage_cost);
      r.t.push_back(t);
      s = step(s, inputs[k], d, cfg.sample_days, params);
      noise.perturb_state(s);
      for (std::size_t i = 0; i < kStateDim; ++i) {
        if (!(std::abs(s[i]) <= cfg.divergence_bound)) {
          throw std::runtime_error("state entry " + std::to_string(i) + " left the bound");
        }
      }
    }
  } catch (const std::exception& e) {
    std::ostringstream msg;
    msg << "episode " << episode << " (" << influent::to_string(w) << ") discarded at step "
        << r.y.size() << ": " << e.what();
    r.failure = msg.str();
  }
  return r;
}

}  // namespace

Dataset collect_dataset(const PlantParams& params, const PlantState& initial,
                        const CollectConfig& cfg, const WeatherSource& weather, CollectLog* log) {
  if (cfg.weathers.empty()) throw std::invalid_argument("collect_dataset: no weather conditions");
  if (cfg.n_samples == 0) throw std::invalid_argument("collect_dataset: n_samples must be > 0");
  const auto per_episode =
      static_cast<std::size_t>(std::llround(cfg.episode_days / cfg.sample_days));
  if (per_episode == 0) throw std::invalid_argument("collect_dataset: empty episodes");

  Dataset ds;
  ds.horizon = cfg.horizon;
  const auto n = static_cast<Eigen::Index>(cfg.n_samples);
  ds.y.resize(kNumMeasurements, n);
  ds.u.resize(2, n);
  ds.d.resize(14, n);
  ds.c.resize(1, n);

  std::size_t filled = 0, next_episode = 0;
  int kept = 0;
  const std::size_t max_episodes = 4 * (cfg.n_samples / per_episode + 1) + 16;
  while (filled < cfg.n_samples) {
    const std::size_t remaining = cfg.n_samples - filled;
    const std::size_t batch = (remaining + per_episode - 1) / per_episode;
    if (next_episode + batch > max_episodes) {
      throw std::runtime_error("collect_dataset: too many discarded episodes");
    }
    std::vector<EpisodeRecords> results(batch);
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(cfg.threads), 1, batch);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t e = w; e < batch; e += workers) {
          results[e] = run_episode(params, initial, cfg, weather, next_episode + e);
        }
      });
    }
    for (auto& th : pool) th.join();
    next_episode += batch;
    if (log) log->episodes_run += batch;

    for (auto& r : results) {
      if (!r.failure.empty()) {
        if (log) log->discarded.push_back(r.failure);
        continue;
      }
      for (std::size_t k = 0; k < r.y.size() && filled < cfg.n_samples; ++k, ++filled) {
        const auto col = static_cast<Eigen::Index>(filled);
        for (std::size_t i = 0; i < kNumMeasurements; ++i) {
          ds.y(static_cast<Eigen::Index>(i), col) = r.y[k][i];
        }
        ds.u(0, col) = r.u[k].q_a;
        ds.u(1, col) = r.u[k].kla5;
        const auto dv = r.d[k].as_vector();
        for (std::size_t i = 0; i < dv.size(); ++i) ds.d(static_cast<Eigen::Index>(i), col) = dv[i];
        ds.c(0, col) = r.c[k];
        ds.episode.push_back(kept);
        ds.time.push_back(r.t[k]);
      }
      ++kept;
    }
  }
  ds.set_default_split();
  ds.validate();
  return ds;
}

}  // namespace wwtp::dioko
