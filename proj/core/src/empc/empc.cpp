#include "wwtp/empc/empc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <ostream>

namespace wwtp::empc {

void EMPCConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("EMPCConfig: horizon must be >= 1");
  if (R[0] < 0.0 || R[1] < 0.0) throw std::invalid_argument("EMPCConfig: R must be >= 0");
  if (!(u_max[0] > 0.0) || !(u_max[1] > 0.0)) {
    throw std::invalid_argument("EMPCConfig: input bounds must be > 0");
  }
}

Condenser::Condenser(const dioko::Model& model, const EMPCConfig& cfg) : model_(&model), cfg_(cfg) {
  cfg_.validate();
  const auto& dims = model.dims();
  if (dims.nu != 2) throw std::invalid_argument("Condenser: the plant has two manipulated inputs");
  nu_ = dims.nu;
  horizon_ = cfg.horizon;
  latent_ = dims.latent;
  const Eigen::Index p = latent_, m = nu_, T = horizon_;
  const Matrix& a = model.A();
  const Matrix& b = model.B();
  if (a.rows() != p || a.cols() != p || b.rows() != p || b.cols() != m) {
    throw std::invalid_argument("Condenser: model dimension mismatch");
  }

  // powers A^k B and A^j
  std::vector<Matrix> akb(static_cast<std::size_t>(T));
  f_.resize(p * T, p);
  Matrix pow = Matrix::Identity(p, p);
  for (Eigen::Index k = 0; k < T; ++k) {
    akb[static_cast<std::size_t>(k)] = pow * b;
    pow = a * pow;
    f_.middleRows(k * p, p) = pow;
  }
  g_ = Matrix::Zero(p * T, m * T);
  for (Eigen::Index j = 1; j <= T; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      g_.block((j - 1) * p, i * m, p, m) = akb[static_cast<std::size_t>(j - 1 - i)];
    }
  }

  const Vector q = model.q_diag();
  q_bar_ = q.replicate(T, 1);
  const Vector su = model.u_std.scale;
  r_std_.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    r_std_(i) = cfg.R[static_cast<std::size_t>(i)] * su(i) * su(i) / model.c_scale;
  }

  Matrix dtrd = Matrix::Zero(m * T, m * T);
  for (Eigen::Index j = 0; j + 1 < T; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index a0 = j * m + i, a1 = (j + 1) * m + i;
      dtrd(a0, a0) += r_std_(i);
      dtrd(a1, a1) += r_std_(i);
      dtrd(a0, a1) -= r_std_(i);
      dtrd(a1, a0) -= r_std_(i);
    }
  }
  if (cfg.penalize_boundary_move) {
    for (Eigen::Index i = 0; i < m; ++i) dtrd(i, i) += r_std_(i);
  }
  const Matrix qg = q_bar_.asDiagonal() * g_;
  h_ = 2.0 * (g_.transpose() * qg + dtrd);
  h_ = 0.5 * (h_ + h_.transpose());
  k_ = 2.0 * qg.transpose() * f_;
  g0_ = g_.transpose() * model.P().replicate(T, 1);

  lb_.resize(m * T);
  ub_.resize(m * T);
  for (Eigen::Index j = 0; j < T; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      lb_(j * m + i) = (0.0 - model.u_std.mean(i)) / su(i);
      ub_(j * m + i) = (cfg.u_max[static_cast<std::size_t>(i)] - model.u_std.mean(i)) / su(i);
    }
  }
}

CondensedQP Condenser::condense(const Vector& psi0, const Vector* prev_u) const {
  if (psi0.size() != latent_) throw std::invalid_argument("condense: latent size mismatch");
  const dioko::Model& model = *model_;
  CondensedQP out;
  out.qp.H = h_;
  out.qp.g = k_ * psi0 + g0_;
  out.qp.lb = lb_;
  out.qp.ub = ub_;

  const Vector free = f_ * psi0;
  const Vector P = model.P();
  double c = model.cost_head(psi0);
  for (Eigen::Index j = 0; j < horizon_; ++j) {
    const auto seg = free.segment(j * latent_, latent_);
    c += seg.dot(q_bar_.segment(j * latent_, latent_).cwiseProduct(seg)) + P.dot(seg) + model.bias();
  }
  if (cfg_.penalize_boundary_move && prev_u) {
    out.qp.g.head(nu_) -= 2.0 * r_std_.cwiseProduct(*prev_u);
    c += prev_u->dot(r_std_.cwiseProduct(*prev_u));
  }
  out.constant = c;
  return out;
}

double Condenser::direct_objective(const Vector& psi0, const Vector& z, const Vector* prev_u) const {
  const dioko::Model& model = *model_;
  std::vector<Vector> u;
  for (int j = 0; j < horizon_; ++j) u.push_back(z.segment(j * nu_, nu_));
  const auto psi = model.rollout(psi0, u);
  double total = 0.0;
  for (const auto& v : psi) total += model.cost_head(v);
  for (int j = 0; j + 1 < horizon_; ++j) {
    const Vector du = u[static_cast<std::size_t>(j + 1)] - u[static_cast<std::size_t>(j)];
    total += du.dot(r_std_.cwiseProduct(du));
  }
  if (cfg_.penalize_boundary_move && prev_u) {
    const Vector du = u[0] - *prev_u;
    total += du.dot(r_std_.cwiseProduct(du));
  }
  return total;
}

CondensedQP condense(const dioko::Model& model, const Vector& psi0, const EMPCConfig& cfg) {
  return Condenser(model, cfg).condense(psi0);
}

Controller::Controller(std::shared_ptr<const dioko::Model> model, EMPCConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)), condenser_(*model_, cfg_) {
  reset(steady_state_actuation());
}

void Controller::reset(const ControlInput& initial) {
  last_ = initial.clipped();
  warm_.resize(0);
  fallbacks_ = 0;
  steps_ = 0;
}

ControlInput Controller::step(const MeasurementVector& y, const InfluentRecord& d,
                              StepDiagnostics* diag) {
  const auto t0 = std::chrono::steady_clock::now();
  const dioko::Model& model = *model_;
  const Vector yv = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
  const auto dr = d.as_vector();
  const Vector dv = Eigen::Map<const Vector>(dr.data(), static_cast<Eigen::Index>(dr.size()));
  const Vector psi0 = model.encode(yv, dv);

  Vector prev_raw(2);
  prev_raw << last_.q_a, last_.kla5;
  const Vector prev_std = model.standardize_u(prev_raw);
  const auto cqp = condenser_.condense(psi0, &prev_std);

  const int m = condenser_.nu(), T = condenser_.horizon();
  Vector start;
  if (cfg_.warm_start && warm_.size() == m * T) {
    start.resize(m * T);
    start.head(m * (T - 1)) = warm_.tail(m * (T - 1));
    start.tail(m) = warm_.tail(m);
  }
  const auto sol = qp::solve(cqp.qp, cfg_.solver, start);
  const auto t1 = std::chrono::steady_clock::now();

  StepDiagnostics local;
  local.objective = sol.objective + cqp.constant;
  local.kkt_residual = sol.kkt_residual;
  local.iterations = sol.iterations;
  local.status = sol.status;
  local.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  if (cfg_.dump_dir) {
    qp::dump(*cfg_.dump_dir / ("qp_" + std::to_string(steps_) + ".bin"), cqp.qp, sol);
  }
  ++steps_;

  ControlInput u = last_;
  if (sol.status == qp::Status::Optimal) {
    const Vector raw = model.raw_u(sol.z.head(m));
    u = ControlInput{raw(0), raw(1)}.clipped();
    warm_ = sol.z;
  } else {
    local.fallback = true;
    ++fallbacks_;
    std::clog << "empc: solver status " << qp::to_string(sol.status) << " at step " << steps_ - 1
              << " (kkt " << sol.kkt_residual << "); holding previous input\n";
  }
  last_ = u;
  if (diag) *diag = local;
  return u;
}

ControlInput SequencePolicy::act(std::size_t k, const MeasurementVector&, const InfluentRecord&,
                                 StepDiagnostics&) {
  if (seq_.empty()) throw std::logic_error("SequencePolicy: empty sequence");
  return seq_[std::min(k, seq_.size() - 1)];
}

namespace {

indices::RateSample rate_sample(double t, const indices::IndexSnapshot& s, double stored) {
  return {t, s.eq_rate, s.sp_rate, s.ae_rate, s.pe_rate, s.me_rate, stored};
}

}  // namespace

ClosedLoopResult run_closed_loop(const PlantParams& params, const PlantState& initial,
                                 Policy& policy, const influent::WeatherSeries& weather,
                                 const ClosedLoopConfig& cfg) {
  ClosedLoopResult r;
  r.policy = policy.name();
  const auto n_steps = static_cast<std::size_t>(std::llround(cfg.days / cfg.sample_days));
  dioko::PlantNoise noise(cfg.noise, initial);
  PlantState s = initial;
  s.set_time(0.0);
  ControlInput u_last = steady_state_actuation();
  std::vector<double> solve_times;

  std::size_t k = 0;
  try {
    for (; k < n_steps; ++k) {
      const double t = static_cast<double>(k) * cfg.sample_days;
      const auto y_true = measure(s);
      auto y_seen = y_true;
      noise.perturb_measurement(y_seen);
      const auto& d = weather.at(t);

      StepDiagnostics diag;
      const ControlInput u = policy.act(k, y_seen, d, diag);
      if (!u.within_bounds()) {
        throw std::logic_error("policy " + r.policy + " returned an input outside the box");
      }
      const auto snap = indices::stage_cost(y_true, u, d, params, cfg.weights);
      TrajectoryRow row{k, t, u, y_true, snap.stage_cost, snap.eq_rate, snap.oci_rate,
                        diag.solve_ms, diag.kkt_residual};
      r.rows.push_back(row);
      r.samples.push_back(rate_sample(t, snap, s.stored_tss_kg(params)));
      r.cumulative_cost += snap.stage_cost;
      r.cumulative_eq += snap.eq_rate;
      r.cumulative_oci += snap.oci_rate;
      r.max_kkt_residual = std::max(r.max_kkt_residual, diag.kkt_residual);
      if (diag.fallback) ++r.fallbacks;
      solve_times.push_back(diag.solve_ms);
      u_last = u;

      s = step(s, u, d, cfg.sample_days, params);
      noise.perturb_state(s);
      for (std::size_t i = 0; i < kStateDim; ++i) {
        if (!(std::abs(s[i]) <= cfg.divergence_bound)) {
          throw std::runtime_error("state entry " + std::to_string(i) + " left the bound");
        }
      }
    }
    // closing sample for the window integrals
    const double t_end = static_cast<double>(n_steps) * cfg.sample_days;
    const auto y_end = measure(s);
    const auto& d_end = weather.at(std::min(t_end, weather.end_time()));
    const auto snap = indices::stage_cost(y_end, u_last, d_end, params, cfg.weights);
    r.samples.push_back(rate_sample(t_end, snap, s.stored_tss_kg(params)));
  } catch (const std::exception& e) {
    r.aborted = true;
    r.abort_reason = "step " + std::to_string(k) + ": " + e.what();
  }

  if (r.samples.size() >= 2) {
    const double span = r.samples.back().time - r.samples.front().time;
    r.report = indices::windowed_report(r.samples, r.samples.front().time, span);
  }
  if (!solve_times.empty()) {
    double sum = 0.0;
    for (double v : solve_times) sum += v;
    r.mean_solve_ms = sum / static_cast<double>(solve_times.size());
    auto sorted = solve_times;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                     sorted.end());
    r.median_solve_ms = sorted[sorted.size() / 2];
  }
  return r;
}

void write_trajectory_csv(std::ostream& out, const ClosedLoopResult& r) {
  out << "step,time,Qa,KLa5";
  for (const auto& n : measurement_names()) out << ',' << n;
  out << ",c,eq_rate,oci_rate,solve_ms,kkt_residual\n" << std::setprecision(10);
  for (const auto& row : r.rows) {
    out << row.step << ',' << row.time << ',' << row.u.q_a << ',' << row.u.kla5;
    for (double v : row.y) out << ',' << v;
    out << ',' << row.c << ',' << row.eq_rate << ',' << row.oci_rate << ',' << row.solve_ms << ','
        << row.kkt_residual << '\n';
  }
}

}  // namespace wwtp::empc
