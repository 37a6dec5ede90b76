#include "wwtp/nn/autodiff.hpp"

#include <cmath>

namespace wwtp::nn {

std::size_t ParamSet::add(std::string name, Matrix value, bool regularize) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  if (!value.allFinite()) throw std::invalid_argument("parameter '" + name + "' is not finite");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  regularize_.push_back(regularize);
  return values_.size() - 1;
}

void ParamSet::assign(std::size_t i, const Matrix& v) {
  auto& dst = values_.at(i);
  if (dst.rows() != v.rows() || dst.cols() != v.cols()) {
    throw std::invalid_argument("shape mismatch assigning parameter '" + names_[i] + "'");
  }
  dst = v;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& n : names_) {
    if (n == name) return true;
  }
  return false;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

bool ParamSet::operator==(const ParamSet& o) const {
  if (names_ != o.names_ || regularize_ != o.regularize_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != o.values_[i].rows() || values_[i].cols() != o.values_[i].cols() ||
        values_[i] != o.values_[i]) {
      return false;
    }
  }
  return true;
}

Gradients Gradients::zeros_like(const ParamSet& p) {
  Gradients out;
  out.g.reserve(p.size());
  for (const auto& v : p.values()) out.g.push_back(Matrix::Zero(v.rows(), v.cols()));
  return out;
}

Gradients& Gradients::operator+=(const Gradients& o) {
  if (g.size() != o.g.size()) throw std::invalid_argument("gradient sets differ in size");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.g[i];
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& m : g) m *= s;
  return *this;
}

double elu(double x, double alpha) { return x > 0.0 ? x : alpha * std::expm1(x); }

Tape::Tape(const ParamSet& params) : params_(&params) {}

void Tape::check_live() const {
  if (consumed_) throw TapeConsumedError();
}

Var Tape::push(Matrix value, std::function<void(Tape&, const Matrix&)> back) {
  check_live();
  nodes_.push_back({std::move(value), std::move(back), -1});
  return {nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  auto& a = adj_[id];
  if (a.size() == 0) {
    a = g;
  } else {
    a += g;
  }
}

Var Tape::param(std::size_t index) {
  Var v = push(params_->value(index));
  nodes_.back().param = static_cast<long>(index);
  return v;
}

Var Tape::constant(Matrix m) { return push(std::move(m)); }

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.cols() != B.rows()) {
    throw std::invalid_argument("matmul: inner dimensions " + std::to_string(A.cols()) + " and " +
                                std::to_string(B.rows()) + " differ");
  }
  Matrix out = A * B;
  return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g * t.value(b).transpose());
    t.accumulate(b.id, t.value(a).transpose() * g);
  });
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, -g);
  });
}

Var Tape::add_colwise(Var a, Var column) {
  const Matrix& A = value(a);
  const Matrix& c = value(column);
  if (c.cols() != 1 || c.rows() != A.rows()) throw std::invalid_argument("add_colwise: bad column");
  Matrix out = A.colwise() + c.col(0);
  return push(std::move(out), [a, column](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(column.id, g.rowwise().sum());
  });
}

Var Tape::add_scalar(Var a, Var scalar) {
  const Matrix& s = value(scalar);
  if (s.size() != 1) throw std::invalid_argument("add_scalar: expected 1x1");
  Matrix out = value(a).array() + s(0, 0);
  return push(std::move(out), [a, scalar](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(scalar.id, Matrix::Constant(1, 1, g.sum()));
  });
}

Var Tape::mul_colwise(Var a, Var column) {
  const Matrix& A = value(a);
  const Matrix& c = value(column);
  if (c.cols() != 1 || c.rows() != A.rows()) throw std::invalid_argument("mul_colwise: bad column");
  Matrix out = A.array().colwise() * c.col(0).array();
  return push(std::move(out), [a, column](Tape& t, const Matrix& g) {
    const Matrix& A = t.value(a);
    const Matrix& c = t.value(column);
    t.accumulate(a.id, g.array().colwise() * c.col(0).array());
    t.accumulate(column.id, (g.array() * A.array()).rowwise().sum().matrix());
  });
}

Var Tape::hadamard(Var a, Var b) {
  require_same_shape(value(a), value(b), "hadamard");
  Matrix out = value(a).cwiseProduct(value(b));
  return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(t.value(b)));
    t.accumulate(b.id, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::scale(Var a, double s) {
  return push(s * value(a), [a, s](Tape& t, const Matrix& g) { t.accumulate(a.id, s * g); });
}

Var Tape::elu(Var a, double alpha) {
  Matrix out = value(a).unaryExpr([alpha](double x) { return nn::elu(x, alpha); });
  return push(std::move(out), [a, alpha](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix d = x.unaryExpr([alpha](double v) { return v > 0.0 ? 1.0 : alpha * std::exp(v); });
    t.accumulate(a.id, g.cwiseProduct(d));
  });
}

Var Tape::exp(Var a) {
  Matrix out = value(a).array().exp().matrix();
  const std::size_t self = nodes_.size();
  return push(std::move(out), [a, self](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(t.nodes_[self].value));
  });
}

Var Tape::cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& A = value(a);
  if (start < 0 || count < 0 || start + count > A.cols()) {
    throw std::out_of_range("cols: block outside matrix");
  }
  Matrix out = A.middleCols(start, count);
  return push(std::move(out), [a, start, count](Tape& t, const Matrix& g) {
    const Matrix& A = t.value(a);
    auto& adj = t.adj_[a.id];
    if (adj.size() == 0) adj = Matrix::Zero(A.rows(), A.cols());
    adj.middleCols(start, count) += g;
  });
}

Var Tape::colwise_sum(Var a) {
  Matrix out = value(a).colwise().sum();
  return push(std::move(out), [a](Tape& t, const Matrix& g) {
    const Matrix& A = t.value(a);
    t.accumulate(a.id, g.replicate(A.rows(), 1));
  });
}

Var Tape::sum(Var a) {
  return push(Matrix::Constant(1, 1, value(a).sum()), [a](Tape& t, const Matrix& g) {
    const Matrix& A = t.value(a);
    t.accumulate(a.id, Matrix::Constant(A.rows(), A.cols(), g(0, 0)));
  });
}

Var Tape::sum_squares(Var a) {
  return push(Matrix::Constant(1, 1, value(a).squaredNorm()), [a](Tape& t, const Matrix& g) {
    t.accumulate(a.id, 2.0 * g(0, 0) * t.value(a));
  });
}

Gradients Tape::backward(Var loss, double seed) {
  check_live();
  if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  consumed_ = true;
  adj_.assign(nodes_.size(), Matrix());
  adj_[loss.id] = Matrix::Constant(1, 1, seed);

  Gradients out = Gradients::zeros_like(*params_);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (adj_[i].size() == 0) continue;
    auto& node = nodes_[i];
    if (node.param >= 0) {
      out.g[static_cast<std::size_t>(node.param)] += adj_[i];
    } else if (node.back) {
      node.back(*this, adj_[i]);
    }
    adj_[i] = Matrix();
  }
  return out;
}

}  // namespace wwtp::nn
