#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wwtp/nn/autodiff.hpp"

namespace wwtp::nn {

struct MLPSpec {
  int input = 55;
  std::vector<int> hidden{128, 128};
  int output = 60;
  double elu_alpha = 1.0;
  std::string prefix = "enc";

  void validate() const;
  std::size_t layers() const { return hidden.size() + 1; }
  int fan_in(std::size_t layer) const;
  int fan_out(std::size_t layer) const;
  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;
};

/// Registers weights (He-Gaussian, regularized) and zero biases in `params`.
void init_params(const MLPSpec& spec, std::uint64_t seed, ParamSet& params);
ParamSet init_params(const MLPSpec& spec, std::uint64_t seed);

/// ELU after every hidden layer; the output layer is affine. `input` holds one sample per
/// column.
Var mlp_forward(Tape& tape, const MLPSpec& spec, const ParamSet& params, Var input);

/// Tape-free evaluation of the same map.
Matrix mlp_eval(const MLPSpec& spec, const ParamSet& params, const Matrix& input);

}  // namespace wwtp::nn
