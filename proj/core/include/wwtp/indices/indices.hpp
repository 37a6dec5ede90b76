#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "wwtp/plant/plant.hpp"

namespace wwtp::indices {

struct IndexWeights {
  // effluent quality weights for TSS, COD, S_NKj, S_NO, BOD
  std::array<double, 5> a{2.0, 1.0, 30.0, 10.0, 2.0};
  // pumping energy weights for Qa, Qr, Qw
  std::array<double, 3> b{0.004, 0.008, 0.05};
  double m1 = 0.005;
  double mixing_threshold = 20.0;  // 1/day
  double so_sat = 8.0;
  double w_eq = 1.0;
  double w_oci = 0.3;
};

struct CompositeEffluent {
  double tss = 0.0;
  double cod = 0.0;
  double s_nkj = 0.0;
  double s_no = 0.0;
  double bod = 0.0;
  double q_e = 0.0;
};

// Particulate COD of the wastage stream.
struct WastageParticulates {
  double x_i = 0.0;
  double x_s = 0.0;
  double x_bh = 0.0;
  double x_ba = 0.0;
  double x_p = 0.0;
};

struct IndexSnapshot {
  double eq_rate = 0.0;   // kg pollution units / day
  double sp_rate = 0.0;   // kg / day
  double ae_rate = 0.0;   // kWh / day
  double pe_rate = 0.0;   // kWh / day
  double me_rate = 0.0;   // kWh / day
  double oci_rate = 0.0;
  double stage_cost = 0.0;
};

/// Effluent composition from the top layer, with particulates split by the compartment-5
/// ratios. q_e is left at zero; eq_rate takes it separately.
CompositeEffluent composites(const MeasurementVector& y, const Asm1Kinetics& kin = {},
                             double tss_per_cod = 0.75);

/// Particulates leaving with the wastage flow (bottom layer).
WastageParticulates wastage_particulates(const MeasurementVector& y, double tss_per_cod = 0.75);

double eq_rate(const CompositeEffluent& e, double q_e, const IndexWeights& w = {});
double sp_rate(const WastageParticulates& x, double q_w, double tss_per_cod = 0.75);
double ae_rate(std::span<const double, kNumCompartments> kla,
               std::span<const double, kNumCompartments> volume, const IndexWeights& w = {});
double pe_rate(double q_a, double q_r, double q_w, const IndexWeights& w = {});
double me_rate(std::span<const double, kNumCompartments> kla,
               std::span<const double, kNumCompartments> volume, const IndexWeights& w = {});
double oci_rate(double sp, double ae, double pe, double me);

/// Effluent flow by overall flow balance: Q0 - Qw.
double effluent_flow(const InfluentRecord& d, const PlantParams& params);

/// Instantaneous rates and c = w_EQ * EQ + w_OCI * OCI at one sample.
IndexSnapshot stage_cost(const MeasurementVector& y, const ControlInput& u,
                         const InfluentRecord& d, const PlantParams& params,
                         const IndexWeights& w = {});

// One sample of a trajectory as consumed by the windowed reporter. State-driven rates are
// integrated by the trapezoid rule; input-driven rates (AE, PE, ME) are integrated exactly
// as zero-order holds over [time, next time).
struct RateSample {
  double time = 0.0;
  double eq_rate = 0.0;
  double sp_rate = 0.0;
  double ae_rate = 0.0;
  double pe_rate = 0.0;
  double me_rate = 0.0;
  double stored_tss_kg = 0.0;
};

struct WindowReport {
  double t0 = 0.0;
  double duration = 0.0;
  double eq = 0.0;
  double sp = 0.0;
  double ae = 0.0;
  double pe = 0.0;
  double me = 0.0;
  double oci = 0.0;
};

/// Time averages over [t0, t0 + duration]; both ends must coincide with sample times.
WindowReport windowed_report(std::span<const RateSample> trajectory, double t0, double duration);

/// "index,value" rows: EQ, SP, AE, PE, ME, OCI.
void write_report_csv(std::ostream& out, const WindowReport& r);
/// One-line summary: stage cost, EQ, OCI and the mean per-step solve time.
void write_report_text(std::ostream& out, const WindowReport& r, double cumulative_stage_cost,
                       double mean_solve_ms);

}  // namespace wwtp::indices
