#include "wwtp/nn/adam.hpp"

#include <cmath>

namespace wwtp::nn {

AdamState AdamState::for_params(const ParamSet& p, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& v : p.values()) {
    s.m.push_back(Matrix::Zero(v.rows(), v.cols()));
    s.v.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
  return s;
}

void adam_step(AdamState& state, ParamSet& params, const Gradients& grads) {
  if (grads.g.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads.g[i];
    const auto& p = params.value(i);
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + params.name(i) + "'");
    }
    if (!g.allFinite()) throw NonFiniteGradientError(params.name(i));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads.g[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    if (state.lr == 0.0) continue;
    auto& p = params.mutable_value(i);
    p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

Var l2_penalty(Tape& tape, const ParamSet& params, double lambda) {
  Var total = tape.constant(Matrix::Zero(1, 1));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.regularized(i)) continue;
    total = tape.add(total, tape.sum_squares(tape.param(i)));
  }
  return tape.scale(total, lambda);
}

}  // namespace wwtp::nn
