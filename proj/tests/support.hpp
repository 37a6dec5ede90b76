#pragma once

#include <random>

#include "wwtp/dioko/dataset.hpp"
#include "wwtp/plant/plant.hpp"

namespace wwtp::test {

/// The 14-day settled plant under the constant dry influent, computed once per process.
inline const PlantState& settled_state() {
  static const PlantState s = settle_to_steady_state(PlantParams{}, steady_state_actuation(),
                                                     constant_dry_influent());
  return s;
}

// Two-state linear system x+ = A x + B u with cost x1^2 + 0.5 x2^2. Its cost is an exact
// quadratic in x, so a linear latent model with a quadratic head represents it exactly.
struct ToySystem {
  Eigen::Matrix2d A = (Eigen::Matrix2d() << 0.9, 0.1, 0.0, 0.8).finished();
  Eigen::Vector2d B{0.3, 0.5};

  static double cost(const Eigen::Vector2d& x) { return x(0) * x(0) + 0.5 * x(1) * x(1); }
};

/// Episodes of `episode_len` steps from uniform initial states under uniform inputs in [-1, 1].
inline dioko::Dataset toy_dataset(int n = 8000, int horizon = 10, int episode_len = 200,
                                  std::uint64_t seed = 3) {
  const ToySystem sys;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  dioko::Dataset ds;
  ds.y.resize(2, n);
  ds.u.resize(1, n);
  ds.d.resize(0, n);
  ds.c.resize(1, n);
  int ep = -1;
  Eigen::Vector2d x;
  for (int k = 0; k < n; ++k) {
    if (k % episode_len == 0) {
      ++ep;
      x << unif(rng), unif(rng);
    }
    const double u = unif(rng);
    ds.y.col(k) = x;
    ds.u(0, k) = u;
    ds.c(0, k) = ToySystem::cost(x);
    ds.episode.push_back(ep);
    ds.time.push_back((k % episode_len) / 96.0);
    x = sys.A * x + sys.B * u;
  }
  ds.horizon = horizon;
  ds.set_default_split();
  return ds;
}

inline dioko::ModelDims toy_dims(int latent = 4, int hidden = 16) {
  return dioko::ModelDims{2, 0, 1, latent, {hidden, hidden}};
}

}  // namespace wwtp::test
