#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wwtp/dioko/dataset.hpp"
#include "wwtp/dioko/model.hpp"
#include "wwtp/indices/indices.hpp"
#include "wwtp/influent/influent.hpp"
#include "wwtp/plant/plant.hpp"
#include "wwtp/qp/qp.hpp"

namespace wwtp::empc {

using dioko::Matrix;
using dioko::Vector;

struct EMPCConfig {
  int horizon = 30;
  std::array<double, 2> u_max{ControlInput::kQaMax, ControlInput::kKla5Max};
  std::array<double, 2> R{1.2e-8, 1.77733e-5};  // raw input units, raw cost units
  double sample_days = 15.0 / 1440.0;
  bool penalize_boundary_move = false;
  bool warm_start = true;
  qp::SolveOptions solver{1e-8, 5000, false};
  std::optional<std::filesystem::path> dump_dir;

  void validate() const;
};

struct CondensedQP {
  qp::QPProblem qp;
  double constant = 0.0;

  double objective(const Vector& z) const { return qp.objective(z) + constant; }
};

/// Precomputes the psi0-independent parts of the condensed program for one model.
class Condenser {
 public:
  Condenser(const dioko::Model& model, const EMPCConfig& cfg);

  /// QP over z = (u_0..u_{T-1}) in standardized input units. `prev_u` (standardized) is only
  /// used when the boundary move penalty is enabled.
  CondensedQP condense(const Vector& psi0, const Vector* prev_u = nullptr) const;

  /// Direct evaluation: sum_{j=0}^{T} cost_head(psi_j(z)) + within-horizon move penalty.
  double direct_objective(const Vector& psi0, const Vector& z, const Vector* prev_u = nullptr) const;

  const Matrix& hessian() const { return h_; }
  const Vector& r_std() const { return r_std_; }
  const Vector& lb() const { return lb_; }
  const Vector& ub() const { return ub_; }
  int nu() const { return nu_; }
  int horizon() const { return horizon_; }

 private:
  const dioko::Model* model_;
  EMPCConfig cfg_;
  int nu_ = 0, horizon_ = 0, latent_ = 0;
  Matrix f_;      // stacked A^j, j = 1..T
  Matrix g_;      // stacked controllability blocks
  Matrix h_;      // 2 (G'QG + D'RD)
  Matrix k_;      // g = k_ psi0 + g0_
  Vector g0_;
  Vector q_bar_;  // diag of Q repeated T times
  Vector r_std_;  // move weights in standardized units
  Vector lb_, ub_;
};

CondensedQP condense(const dioko::Model& model, const Vector& psi0, const EMPCConfig& cfg);

struct StepDiagnostics {
  double objective = 0.0;
  double kkt_residual = 0.0;
  double solve_ms = 0.0;  // wall clock of encode + condense + solve
  int iterations = 0;
  qp::Status status = qp::Status::Optimal;
  bool fallback = false;
};

class Controller {
 public:
  Controller(std::shared_ptr<const dioko::Model> model, EMPCConfig cfg);

  /// Receding-horizon step: returns the first input of the optimal sequence, or the previous
  /// applied input if the solver did not reach optimality.
  ControlInput step(const MeasurementVector& y, const InfluentRecord& d, StepDiagnostics* diag);

  void reset(const ControlInput& initial);
  const ControlInput& last_applied() const { return last_; }
  std::size_t fallbacks() const { return fallbacks_; }
  const EMPCConfig& config() const { return cfg_; }
  const Condenser& condenser() const { return condenser_; }

 private:
  std::shared_ptr<const dioko::Model> model_;
  EMPCConfig cfg_;
  Condenser condenser_;
  Vector warm_;
  ControlInput last_;
  std::size_t fallbacks_ = 0;
  std::size_t steps_ = 0;
};

// ---- closed loop ------------------------------------------------------------

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual ControlInput act(std::size_t k, const MeasurementVector& y, const InfluentRecord& d,
                           StepDiagnostics& diag) = 0;
};

class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(ControlInput u) : u_(u) {}
  std::string name() const override { return "constant"; }
  ControlInput act(std::size_t, const MeasurementVector&, const InfluentRecord&,
                   StepDiagnostics&) override {
    return u_;
  }

 private:
  ControlInput u_;
};

class SequencePolicy : public Policy {
 public:
  SequencePolicy(std::string name, std::vector<ControlInput> seq)
      : name_(std::move(name)), seq_(std::move(seq)) {}
  std::string name() const override { return name_; }
  ControlInput act(std::size_t k, const MeasurementVector&, const InfluentRecord&,
                   StepDiagnostics&) override;

 private:
  std::string name_;
  std::vector<ControlInput> seq_;
};

class EmpcPolicy : public Policy {
 public:
  explicit EmpcPolicy(Controller& c, std::string name = "dioko-empc")
      : controller_(&c), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  ControlInput act(std::size_t, const MeasurementVector& y, const InfluentRecord& d,
                   StepDiagnostics& diag) override {
    return controller_->step(y, d, &diag);
  }

 private:
  Controller* controller_;
  std::string name_;
};

struct ClosedLoopConfig {
  double days = 14.0;
  double sample_days = 15.0 / 1440.0;
  dioko::NoiseConfig noise{};
  indices::IndexWeights weights{};
  double divergence_bound = 1e7;
};

struct TrajectoryRow {
  std::size_t step = 0;
  double time = 0.0;
  ControlInput u;
  MeasurementVector y{};  // true (noise-free) measurement
  double c = 0.0;
  double eq_rate = 0.0;
  double oci_rate = 0.0;
  double solve_ms = 0.0;
  double kkt_residual = 0.0;
};

struct ClosedLoopResult {
  std::string policy;
  std::vector<TrajectoryRow> rows;
  std::vector<indices::RateSample> samples;
  indices::WindowReport report;
  double cumulative_cost = 0.0;
  double cumulative_eq = 0.0;
  double cumulative_oci = 0.0;
  double mean_solve_ms = 0.0;
  double median_solve_ms = 0.0;
  double max_kkt_residual = 0.0;
  std::size_t fallbacks = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Runs round(days / sample_days) control steps from `initial`. Stage costs and indices use the
/// true measurement; the policy sees the (optionally noisy) one.
ClosedLoopResult run_closed_loop(const PlantParams& params, const PlantState& initial,
                                 Policy& policy, const influent::WeatherSeries& weather,
                                 const ClosedLoopConfig& cfg = {});

/// Header: step,time,Qa,KLa5,<41 measurement names>,c,eq_rate,oci_rate,solve_ms,kkt_residual
void write_trajectory_csv(std::ostream& out, const ClosedLoopResult& r);

}  // namespace wwtp::empc
