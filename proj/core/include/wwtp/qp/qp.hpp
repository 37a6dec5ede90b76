#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

namespace wwtp::qp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// min 1/2 z'Hz + g'z  s.t.  lb <= z <= ub
struct QPProblem {
  Matrix H;
  Vector g;
  Vector lb;
  Vector ub;

  Eigen::Index size() const { return g.size(); }
  double objective(const Vector& z) const { return 0.5 * z.dot(H * z) + g.dot(z); }
  /// Throws std::invalid_argument on inconsistent sizes, asymmetry beyond 1e-10 or an
  /// eigenvalue below -1e-10.
  void validate() const;
  bool box_feasible() const;
};

enum class Status { Optimal, MaxIter, InfeasibleBox };
const char* to_string(Status s);

struct QPSolution {
  Vector z;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  Status status = Status::MaxIter;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 2000;
  bool validate = false;  // run QPProblem::validate first
};

/// Projected gradient with Barzilai-Borwein steps and an Armijo safeguard, interleaved with
/// Newton steps on the free variables. `warm` (if non-empty) is projected and used as start.
QPSolution solve(const QPProblem& p, const SolveOptions& opts = {}, const Vector& warm = {});

/// ||z - P(z - (Hz + g))||_inf with P the projection onto the box.
double kkt_residual(const QPProblem& p, const Vector& z);

Vector project(const Vector& z, const Vector& lb, const Vector& ub);

/// Writes H, g, lb, ub and z in the named-array container format.
void dump(const std::filesystem::path& path, const QPProblem& p, const QPSolution& s);

}  // namespace wwtp::qp
