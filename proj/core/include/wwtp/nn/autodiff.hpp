#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wwtp::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Ordered named parameter matrices. Shapes are fixed once added.
class ParamSet {
 public:
  std::size_t add(std::string name, Matrix value, bool regularize = false);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  bool regularized(std::size_t i) const { return regularize_.at(i); }
  void set_regularized(std::size_t i, bool on) { regularize_.at(i) = on; }

  const Matrix& value(std::size_t i) const { return values_.at(i); }
  /// Overwrite values; the shape must match.
  void assign(std::size_t i, const Matrix& v);
  Matrix& mutable_value(std::size_t i) { return values_.at(i); }

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t total_size() const;
  bool all_finite() const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Matrix>& values() const { return values_; }

  bool operator==(const ParamSet& o) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<bool> regularize_;
};

/// Gradients aligned with a ParamSet; entries of unused parameters are zero.
struct Gradients {
  std::vector<Matrix> g;

  static Gradients zeros_like(const ParamSet& p);
  Gradients& operator+=(const Gradients& o);
  Gradients& operator*=(double s);
};

class TapeConsumedError : public std::logic_error {
 public:
  TapeConsumedError() : std::logic_error("tape has already been consumed by backward()") {}
};

class Tape;

struct Var {
  std::size_t id = 0;
};

/// Matrix-valued reverse-mode tape. Nodes are recorded in execution order.
class Tape {
 public:
  explicit Tape(const ParamSet& params);

  Var param(std::size_t index);
  Var constant(Matrix m);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_colwise(Var a, Var column);  // a + column broadcast over columns
  Var add_scalar(Var a, Var scalar);   // a + 1x1 broadcast
  Var mul_colwise(Var a, Var column);  // a .* column broadcast over columns
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var elu(Var a, double alpha = 1.0);
  Var exp(Var a);
  Var cols(Var a, Eigen::Index start, Eigen::Index count);
  Var colwise_sum(Var a);  // 1 x cols
  Var sum(Var a);          // 1 x 1
  Var sum_squares(Var a);  // 1 x 1

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Backpropagate from a 1x1 node seeded with `seed`.
  Gradients backward(Var loss, double seed = 1.0);

 private:
  struct Node {
    Matrix value;
    std::function<void(Tape&, const Matrix&)> back;  // receives the node's adjoint
    long param = -1;
  };

  Var push(Matrix value, std::function<void(Tape&, const Matrix&)> back = {});
  void accumulate(std::size_t id, const Matrix& g);
  void check_live() const;

  const ParamSet* params_;
  std::vector<Node> nodes_;
  std::vector<Matrix> adj_;
  bool consumed_ = false;
};

double elu(double x, double alpha = 1.0);

}  // namespace wwtp::nn
