#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wwtp/nn/autodiff.hpp"
#include "wwtp/nn/container.hpp"
#include "wwtp/nn/mlp.hpp"

namespace wwtp::dioko {

using nn::Matrix;
using nn::Vector;

struct ModelDims {
  int ny = 41;
  int nd = 14;
  int nu = 2;
  int latent = 60;
  std::vector<int> hidden{128, 128};

  void validate() const;
};

/// Per-channel affine map x -> (x - mean) / scale.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer identity(int n);
  /// Statistics over the columns of `samples`; channels with std below `floor` keep scale 1.
  static Standardizer fit(const Matrix& samples, double floor = 1e-8);

  int size() const { return static_cast<int>(mean.size()); }
  Vector apply(const Vector& x) const;
  Vector invert(const Vector& z) const;
  Matrix apply_cols(const Matrix& x) const;
};

class Model {
 public:
  Model() = default;
  /// Random encoder (He init), A = 0.99 I, B ~ N(0, b_std^2), q_v = -ln(latent), P = 0, b = 0.
  Model(const ModelDims& dims, std::uint64_t seed, double b_std = 0.01);
  /// Every parameter zero, identity standardization.
  static Model zeros(const ModelDims& dims);

  const ModelDims& dims() const { return dims_; }
  const nn::MLPSpec& encoder_spec() const { return enc_; }
  const nn::ParamSet& params() const { return params_; }
  nn::ParamSet& params() { return params_; }

  std::size_t a_index() const { return a_; }
  std::size_t b_index() const { return b_; }
  std::size_t qv_index() const { return qv_; }
  std::size_t p_index() const { return p_; }
  std::size_t bias_index() const { return bias_; }

  const Matrix& A() const { return params_.value(a_); }
  const Matrix& B() const { return params_.value(b_); }
  Vector q_v() const { return params_.value(qv_).col(0); }
  Vector q_diag() const { return params_.value(qv_).col(0).array().exp(); }
  Vector P() const { return params_.value(p_).row(0).transpose(); }
  double bias() const { return params_.value(bias_)(0, 0); }

  Standardizer y_std, d_std, u_std;
  double c_mean = 0.0;
  double c_scale = 1.0;

  /// Latent vector from raw measurements and disturbances.
  Vector encode(const Vector& y, const Vector& d) const;
  /// Latent vector from already standardized inputs.
  Vector encode_standardized(const Vector& ys, const Vector& ds) const;

  /// psi_{j+1} = A psi_j + B u_j with u in standardized units; returns H+1 vectors.
  std::vector<Vector> rollout(const Vector& psi0, const std::vector<Vector>& u) const;

  /// psi' diag(exp q_v) psi + P psi + b, in standardized cost units.
  double cost_head(const Vector& psi) const;
  double cost_head_raw(const Vector& psi) const { return c_mean + c_scale * cost_head(psi); }

  Vector standardize_u(const Vector& u_raw) const { return u_std.apply(u_raw); }
  Vector raw_u(const Vector& u_s) const { return u_std.invert(u_s); }

  void to_arrays(nn::ArrayMap& out) const;
  static Model from_arrays(const nn::ArrayMap& in);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  bool operator==(const Model& o) const;

 private:
  void register_koopman(std::uint64_t seed, double b_std, bool zero);

  ModelDims dims_;
  nn::MLPSpec enc_;
  nn::ParamSet params_;
  std::size_t a_ = 0, b_ = 0, qv_ = 0, p_ = 0, bias_ = 0;
};

}  // namespace wwtp::dioko
