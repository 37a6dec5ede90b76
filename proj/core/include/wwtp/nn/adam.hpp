#pragma once

#include <cstdint>
#include <vector>

#include "wwtp/nn/autodiff.hpp"

namespace wwtp::nn {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ParamSet& p, double lr = 1e-3);
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(const std::string& param)
      : std::runtime_error("non-finite gradient for parameter '" + param + "'"), param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

/// One bias-corrected Adam update of every parameter.
void adam_step(AdamState& state, ParamSet& params, const Gradients& grads);

/// Adds lambda * sum ||W||^2 over regularized parameters to the tape and returns it (1x1).
Var l2_penalty(Tape& tape, const ParamSet& params, double lambda);

}  // namespace wwtp::nn
