#include "wwtp/indices/indices.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace wwtp::indices {

namespace {

constexpr double kTimeTol = 1e-9;

std::array<double, kNumSpecies> compartment5_ratios(const MeasurementVector& y,
                                                    double tss_per_cod) {
  const auto& m = measurement_layout();
  const double x_f =
      tss_per_cod * (y[m.c5_x_s] + y[m.c5_x_i] + y[m.c5_x_bh] + y[m.c5_x_ba] + y[m.c5_x_p]);
  std::array<double, kNumSpecies> r{};
  if (x_f <= 0.0) return r;
  r[X_I] = y[m.c5_x_i] / x_f;
  r[X_S] = y[m.c5_x_s] / x_f;
  r[X_BH] = y[m.c5_x_bh] / x_f;
  r[X_BA] = y[m.c5_x_ba] / x_f;
  r[X_P] = y[m.c5_x_p] / x_f;
  r[X_ND] = y[m.c5_x_nd] / x_f;
  return r;
}

}  // namespace

CompositeEffluent composites(const MeasurementVector& y, const Asm1Kinetics& kin,
                             double tss_per_cod) {
  const auto& m = measurement_layout();
  const auto ratio = compartment5_ratios(y, tss_per_cod);
  const double x_top = y[m.top_first + L_X];
  const double s_i = y[m.top_first + L_S_I];
  const double s_s = y[m.top_first + L_S_S];
  const double s_nh = y[m.top_first + L_S_NH];
  const double s_nd = y[m.top_first + L_S_ND];
  const double s_no = y[m.top_first + L_S_NO];
  const double x_i = x_top * ratio[X_I];
  const double x_s = x_top * ratio[X_S];
  const double x_bh = x_top * ratio[X_BH];
  const double x_ba = x_top * ratio[X_BA];
  const double x_p = x_top * ratio[X_P];
  const double x_nd = x_top * ratio[X_ND];

  CompositeEffluent e;
  e.tss = tss_per_cod * (x_s + x_i + x_bh + x_ba + x_p);
  e.cod = s_s + s_i + x_s + x_i + x_bh + x_ba + x_p;
  e.bod = 0.25 * (s_s + x_s + (1.0 - kin.f_p) * (x_bh + x_ba));
  e.s_nkj = s_nh + s_nd + x_nd + kin.i_xb * (x_bh + x_ba) + kin.i_xp * (x_p + x_i);
  e.s_no = s_no;
  return e;
}

WastageParticulates wastage_particulates(const MeasurementVector& y, double tss_per_cod) {
  const auto& m = measurement_layout();
  const auto ratio = compartment5_ratios(y, tss_per_cod);
  const double x_bottom = y[m.bottom_first + L_X];
  return {x_bottom * ratio[X_I], x_bottom * ratio[X_S], x_bottom * ratio[X_BH],
          x_bottom * ratio[X_BA], x_bottom * ratio[X_P]};
}

double eq_rate(const CompositeEffluent& e, double q_e, const IndexWeights& w) {
  const double weighted =
      w.a[0] * e.tss + w.a[1] * e.cod + w.a[2] * e.s_nkj + w.a[3] * e.s_no + w.a[4] * e.bod;
  return weighted * q_e / 1000.0;
}

double sp_rate(const WastageParticulates& x, double q_w, double tss_per_cod) {
  return tss_per_cod * (x.x_s + x.x_i + x.x_bh + x.x_ba + x.x_p) * q_w / 1000.0;
}

double ae_rate(std::span<const double, kNumCompartments> kla,
               std::span<const double, kNumCompartments> volume, const IndexWeights& w) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumCompartments; ++i) sum += volume[i] * kla[i];
  return w.so_sat / 1800.0 * sum;
}

double pe_rate(double q_a, double q_r, double q_w, const IndexWeights& w) {
  return w.b[0] * q_a + w.b[1] * q_r + w.b[2] * q_w;
}

double me_rate(std::span<const double, kNumCompartments> kla,
               std::span<const double, kNumCompartments> volume, const IndexWeights& w) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumCompartments; ++i) {
    if (kla[i] < w.mixing_threshold) sum += w.m1 * volume[i];
  }
  return 24.0 * sum;
}

double oci_rate(double sp, double ae, double pe, double me) { return 5.0 * sp + ae + pe + me; }

double effluent_flow(const InfluentRecord& d, const PlantParams& params) {
  return d.q0 - params.q_w;
}

IndexSnapshot stage_cost(const MeasurementVector& y, const ControlInput& u,
                         const InfluentRecord& d, const PlantParams& params,
                         const IndexWeights& w) {
  const auto kla = params.kla(u);
  IndexSnapshot s;
  s.eq_rate = eq_rate(composites(y, params.kin, params.tss_per_cod), effluent_flow(d, params), w);
  s.sp_rate = sp_rate(wastage_particulates(y, params.tss_per_cod), params.q_w, params.tss_per_cod);
  s.ae_rate = ae_rate(kla, params.volume, w);
  s.pe_rate = pe_rate(u.q_a, params.q_r, params.q_w, w);
  s.me_rate = me_rate(kla, params.volume, w);
  s.oci_rate = oci_rate(s.sp_rate, s.ae_rate, s.pe_rate, s.me_rate);
  s.stage_cost = w.w_eq * s.eq_rate + w.w_oci * s.oci_rate;
  return s;
}

WindowReport windowed_report(std::span<const RateSample> traj, double t0, double duration) {
  if (!(duration > 0.0)) throw std::invalid_argument("windowed_report: duration must be > 0");
  if (traj.size() < 2) throw std::invalid_argument("windowed_report: need at least two samples");
  const double t1 = t0 + duration;
  std::size_t first = traj.size(), last = traj.size();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (k > 0 && !(traj[k].time > traj[k - 1].time)) {
      throw std::invalid_argument("windowed_report: sample times must increase");
    }
    if (first == traj.size() && std::abs(traj[k].time - t0) <= kTimeTol) first = k;
    if (std::abs(traj[k].time - t1) <= kTimeTol) last = k;
  }
  if (first == traj.size() || last == traj.size() || last <= first) {
    throw std::out_of_range("windowed_report: window [" + std::to_string(t0) + ", " +
                            std::to_string(t1) + "] is not covered by the trajectory samples");
  }

  double eq = 0.0, sp = 0.0, ae = 0.0, pe = 0.0, me = 0.0;
  for (std::size_t k = first; k < last; ++k) {
    const double dt = traj[k + 1].time - traj[k].time;
    eq += 0.5 * dt * (traj[k].eq_rate + traj[k + 1].eq_rate);
    sp += 0.5 * dt * (traj[k].sp_rate + traj[k + 1].sp_rate);
    ae += dt * traj[k].ae_rate;
    pe += dt * traj[k].pe_rate;
    me += dt * traj[k].me_rate;
  }
  const double accumulation = traj[last].stored_tss_kg - traj[first].stored_tss_kg;

  WindowReport r;
  r.t0 = t0;
  r.duration = duration;
  r.eq = eq / duration;
  r.sp = (sp + accumulation) / duration;
  r.ae = ae / duration;
  r.pe = pe / duration;
  r.me = me / duration;
  r.oci = oci_rate(r.sp, r.ae, r.pe, r.me);
  return r;
}

void write_report_csv(std::ostream& out, const WindowReport& r) {
  out << "index,value\n" << std::setprecision(10);
  out << "EQ," << r.eq << "\nSP," << r.sp << "\nAE," << r.ae << "\nPE," << r.pe << "\nME," << r.me
      << "\nOCI," << r.oci << '\n';
}

void write_report_text(std::ostream& out, const WindowReport& r, double cumulative_stage_cost,
                       double mean_solve_ms) {
  out << std::setprecision(6) << "stage_cost=" << cumulative_stage_cost << " EQ=" << r.eq
      << " OCI=" << r.oci << " solve_ms=" << mean_solve_ms << " (window " << r.t0 << "+"
      << r.duration << " d)\n";
}

}  // namespace wwtp::indices
