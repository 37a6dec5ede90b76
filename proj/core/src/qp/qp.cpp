#include "wwtp/qp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wwtp/nn/container.hpp"

namespace wwtp::qp {

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal:
      return "optimal";
    case Status::MaxIter:
      return "max-iter";
    case Status::InfeasibleBox:
      return "infeasible-box";
  }
  return "?";
}

void QPProblem::validate() const {
  const auto n = g.size();
  if (H.rows() != n || H.cols() != n || lb.size() != n || ub.size() != n) {
    throw std::invalid_argument("QPProblem: inconsistent dimensions");
  }
  if (!H.allFinite() || !g.allFinite()) throw std::invalid_argument("QPProblem: non-finite data");
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("QPProblem: H is not symmetric");
  }
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(H, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
      throw std::invalid_argument("QPProblem: H is not positive semidefinite (min eigenvalue " +
                                  std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }
  }
}

bool QPProblem::box_feasible() const { return (lb.array() <= ub.array()).all(); }

Vector project(const Vector& z, const Vector& lb, const Vector& ub) {
  return z.cwiseMax(lb).cwiseMin(ub);
}

double kkt_residual(const QPProblem& p, const Vector& z) {
  if (z.size() == 0) return 0.0;
  const Vector grad = p.H * z + p.g;
  return (z - project(z - grad, p.lb, p.ub)).cwiseAbs().maxCoeff();
}

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMonotoneSlack = 1e-12;

// Newton step restricted to the variables that are not held at a bound by the gradient.
bool newton_polish(const QPProblem& p, Vector& z, Vector& grad, double& f) {
  const auto n = z.size();
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool at_lb = z(i) <= p.lb(i) && grad(i) > 0.0;
    const bool at_ub = z(i) >= p.ub(i) && grad(i) < 0.0;
    if (!at_lb && !at_ub && p.lb(i) < p.ub(i)) free.push_back(i);
  }
  if (free.empty()) return false;
  const auto m = static_cast<Eigen::Index>(free.size());
  Matrix hf(m, m);
  Vector gf(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    gf(a) = grad(free[a]);
    for (Eigen::Index b = 0; b < m; ++b) hf(a, b) = p.H(free[a], free[b]);
  }
  Eigen::LDLT<Matrix> ldlt(hf);
  Vector step;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      (ldlt.vectorD().array() > 1e-14 * std::max(1.0, hf.diagonal().cwiseAbs().maxCoeff())).all()) {
    step = -ldlt.solve(gf);
  } else {
    step = -hf.completeOrthogonalDecomposition().solve(gf);
  }
  if (!step.allFinite()) return false;

  double alpha = 1.0;
  for (int tries = 0; tries < 30; ++tries, alpha *= 0.5) {
    Vector trial = z;
    for (Eigen::Index a = 0; a < m; ++a) trial(free[a]) += alpha * step(a);
    trial = project(trial, p.lb, p.ub);
    const double ft = p.objective(trial);
    if (ft <= f + kMonotoneSlack * std::max(1.0, std::abs(f))) {
      if (ft > f) return false;
      z = trial;
      grad = p.H * z + p.g;
      f = ft;
      return true;
    }
  }
  return false;
}

}  // namespace

QPSolution solve(const QPProblem& p, const SolveOptions& opts, const Vector& warm) {
  if (opts.validate) p.validate();
  const auto n = p.g.size();
  if (p.H.rows() != n || p.H.cols() != n || p.lb.size() != n || p.ub.size() != n) {
    throw std::invalid_argument("solve: inconsistent dimensions");
  }
  QPSolution sol;
  if (!p.box_feasible()) {
    sol.status = Status::InfeasibleBox;
    sol.z = Vector::Zero(n);
    sol.kkt_residual = std::numeric_limits<double>::infinity();
    return sol;
  }

  Vector z = warm.size() == n ? project(warm, p.lb, p.ub) : project(Vector::Zero(n), p.lb, p.ub);
  Vector grad = p.H * z + p.g;
  double f = p.objective(z);
  const double hnorm = std::max(p.H.cwiseAbs().rowwise().sum().maxCoeff(), 1e-300);
  double alpha = 1.0 / hnorm;

  int it = 0;
  double res = kkt_residual(p, z);
  while (res > opts.tol && it < opts.max_iter) {
    ++it;
    // projected gradient step with Armijo backtracking along the projection arc
    Vector z_new;
    double f_new = f;
    double a = alpha;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries, a *= 0.5) {
      z_new = project(z - a * grad, p.lb, p.ub);
      f_new = p.objective(z_new);
      if (f_new <= f + kArmijo * grad.dot(z_new - z) + kMonotoneSlack * std::max(1.0, std::abs(f))) {
        accepted = f_new <= f + kMonotoneSlack * std::max(1.0, std::abs(f));
        break;
      }
    }
    if (accepted) {
      const Vector g_new = p.H * z_new + p.g;
      const Vector s = z_new - z;
      const double sy = s.dot(g_new - grad);
      alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12 / hnorm, 1e12 / hnorm) : 1.0 / hnorm;
      z = std::move(z_new);
      grad = g_new;
      f = f_new;
    } else {
      alpha = 1.0 / hnorm;
    }
    newton_polish(p, z, grad, f);
    res = kkt_residual(p, z);
  }

  sol.z = z;
  sol.objective = f;
  sol.kkt_residual = res;
  sol.iterations = it;
  sol.status = res <= opts.tol ? Status::Optimal : Status::MaxIter;
  return sol;
}

void dump(const std::filesystem::path& path, const QPProblem& p, const QPSolution& s) {
  nn::ArrayMap a;
  a["H"] = p.H;
  a["g"] = p.g;
  a["lb"] = p.lb;
  a["ub"] = p.ub;
  a["z"] = s.z;
  nn::save_container(path, a);
}

}  // namespace wwtp::qp
