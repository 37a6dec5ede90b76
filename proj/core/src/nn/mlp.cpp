#include "wwtp/nn/mlp.hpp"

#include <cmath>
#include <random>

namespace wwtp::nn {

void MLPSpec::validate() const {
  if (input < 1 || output < 1) throw std::invalid_argument("MLPSpec: widths must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("MLPSpec: hidden widths must be >= 1");
  }
  if (!(elu_alpha > 0.0)) throw std::invalid_argument("MLPSpec: ELU alpha must be > 0");
}

int MLPSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input : hidden.at(layer - 1);
}

int MLPSpec::fan_out(std::size_t layer) const {
  return layer == hidden.size() ? output : hidden.at(layer);
}

std::string MLPSpec::weight_name(std::size_t layer) const {
  return prefix + ".W" + std::to_string(layer);
}

std::string MLPSpec::bias_name(std::size_t layer) const {
  return prefix + ".b" + std::to_string(layer);
}

void init_params(const MLPSpec& spec, std::uint64_t seed, ParamSet& params) {
  spec.validate();
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const int in = spec.fan_in(l), out = spec.fan_out(l);
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / in));
    Matrix w(out, in);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = gauss(rng);
    }
    params.add(spec.weight_name(l), std::move(w), true);
    params.add(spec.bias_name(l), Matrix::Zero(out, 1), false);
  }
}

ParamSet init_params(const MLPSpec& spec, std::uint64_t seed) {
  ParamSet p;
  init_params(spec, seed, p);
  return p;
}

namespace {

void check_layer(const MLPSpec& spec, const ParamSet& params, std::size_t l, Eigen::Index rows_in) {
  const auto& w = params.value(params.index_of(spec.weight_name(l)));
  const auto& b = params.value(params.index_of(spec.bias_name(l)));
  if (w.cols() != rows_in || w.rows() != spec.fan_out(l) || b.rows() != w.rows() || b.cols() != 1) {
    throw std::invalid_argument("mlp layer " + std::to_string(l) + " (" + spec.weight_name(l) +
                                "): expected input width " + std::to_string(w.cols()) + ", got " +
                                std::to_string(rows_in));
  }
}

}  // namespace

Var mlp_forward(Tape& tape, const MLPSpec& spec, const ParamSet& params, Var input) {
  Var h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    check_layer(spec, params, l, tape.value(h).rows());
    Var w = tape.param(params.index_of(spec.weight_name(l)));
    Var b = tape.param(params.index_of(spec.bias_name(l)));
    h = tape.add_colwise(tape.matmul(w, h), b);
    if (l + 1 < spec.layers()) h = tape.elu(h, spec.elu_alpha);
  }
  return h;
}

Matrix mlp_eval(const MLPSpec& spec, const ParamSet& params, const Matrix& input) {
  Matrix h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    check_layer(spec, params, l, h.rows());
    const auto& w = params.value(params.index_of(spec.weight_name(l)));
    const auto& b = params.value(params.index_of(spec.bias_name(l)));
    Matrix z = w * h;
    z.colwise() += b.col(0);
    if (l + 1 < spec.layers()) {
      const double a = spec.elu_alpha;
      z = z.unaryExpr([a](double x) { return elu(x, a); });
    }
    h = std::move(z);
  }
  return h;
}

}  // namespace wwtp::nn
