#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wwtp {

// Reactor species, in the fixed order used for every 13-vector in the code base
// (compartment states, influent concentrations, recycle streams).
enum Species : std::size_t {
  S_I = 0,
  S_S,
  X_I,
  X_S,
  X_BH,
  X_BA,
  X_P,
  S_O,
  S_NO,
  S_NH,
  S_ND,
  X_ND,
  S_ALK,
};

// Settler layer variables: seven solubles followed by total suspended solids X.
enum LayerVar : std::size_t {
  L_S_I = 0,
  L_S_S,
  L_S_O,
  L_S_NO,
  L_S_NH,
  L_S_ND,
  L_S_ALK,
  L_X,
};

inline constexpr std::size_t kNumSpecies = 13;
inline constexpr std::size_t kNumCompartments = 5;
inline constexpr std::size_t kNumLayerVars = 8;
inline constexpr std::size_t kNumLayers = 10;
inline constexpr std::size_t kReactorDim = kNumSpecies * kNumCompartments;  // 65
inline constexpr std::size_t kSettlerDim = kNumLayerVars * kNumLayers;      // 80
inline constexpr std::size_t kStateDim = kReactorDim + kSettlerDim;          // 145

// Feed layer, 1-based, counted from the top (layer 1 = effluent, layer 10 = underflow).
inline constexpr std::size_t kFeedLayer = 5;

const std::array<const char*, kNumSpecies>& species_names();
const std::array<const char*, kNumLayerVars>& layer_var_names();
const std::array<const char*, kNumSpecies>& species_units();

using StateVector = std::array<double, kStateDim>;

/// Flat index of species `sp` in reactor compartment `compartment` (1-based).
constexpr std::size_t reactor_index(std::size_t compartment, std::size_t sp) {
  return (compartment - 1) * kNumSpecies + sp;
}

/// Flat index of variable `var` in settler layer `layer` (1-based, 1 = top).
constexpr std::size_t layer_index(std::size_t layer, std::size_t var) {
  return kReactorDim + (layer - 1) * kNumLayerVars + var;
}

/// Unit-bearing names of all 145 entries, e.g. "reactor3.S_NH[gN/m3]".
std::vector<std::string> state_entry_names();

struct ControlInput {
  double q_a = 0.0;   // internal recycle flow, m3/day
  double kla5 = 0.0;  // oxygen transfer coefficient of compartment 5, 1/day

  static constexpr double kQaMax = 92230.0;
  static constexpr double kKla5Max = 240.0;

  bool within_bounds() const {
    return q_a >= 0.0 && q_a <= kQaMax && kla5 >= 0.0 && kla5 <= kKla5Max;
  }
  ControlInput clipped() const;
};

// Known disturbance d: inlet flow plus the 13 inlet concentrations.
struct InfluentRecord {
  double time = 0.0;  // days
  double q0 = 0.0;    // m3/day
  std::array<double, kNumSpecies> z0{};

  std::array<double, 14> as_vector() const;  // (Q0, Z0...)
  void validate() const;
};

struct Asm1Kinetics {
  double mu_h = 4.0;
  double k_s = 10.0;
  double k_oh = 0.2;
  double k_no = 0.5;
  double b_h = 0.3;
  double eta_g = 0.8;
  double eta_h = 0.8;
  double k_h = 3.0;
  double k_x = 0.1;
  double mu_a = 0.5;
  double k_nh = 1.0;
  double b_a = 0.05;
  double k_oa = 0.4;
  double k_a = 0.05;
  double y_h = 0.67;
  double y_a = 0.24;
  double f_p = 0.08;
  double i_xb = 0.08;
  double i_xp = 0.06;
};

// Double-exponential settling velocity parameters.
struct TakacsSettling {
  double v0_max = 250.0;   // maximum practical settling velocity, m/day
  double v0 = 474.0;       // maximum Vesilind velocity, m/day
  double r_h = 0.000576;   // hindered zone parameter, m3/g
  double r_p = 0.00286;    // flocculant zone parameter, m3/g
  double f_ns = 0.00228;   // non-settleable fraction
  double x_t = 3000.0;     // threshold concentration, g/m3
};

struct PlantParams {
  std::array<double, kNumCompartments> volume{1000.0, 1000.0, 1333.0, 1333.0, 1333.0};
  // Aeration of compartments 1-4 is fixed; compartment 5 comes from ControlInput.
  std::array<double, 4> kla_fixed{0.0, 0.0, 240.0, 240.0};
  double q_w = 385.0;
  double q_r = 18846.0;
  double settler_area = 1500.0;
  double layer_height = 0.4;
  double so_sat = 8.0;
  // TSS = 0.75 * particulate COD
  double tss_per_cod = 0.75;
  Asm1Kinetics kin;
  TakacsSettling settling;

  void validate() const;
  std::array<double, kNumCompartments> kla(const ControlInput& u) const;
};

class PlantState {
 public:
  PlantState() { x_.fill(0.0); }
  explicit PlantState(const StateVector& x, double time = 0.0) : x_(x), time_(time) {}

  double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  const StateVector& values() const { return x_; }
  StateVector& values() { return x_; }

  std::span<const double, kNumSpecies> compartment(std::size_t i) const {
    return std::span<const double, kNumSpecies>(x_.data() + (i - 1) * kNumSpecies, kNumSpecies);
  }
  std::span<double, kNumSpecies> compartment(std::size_t i) {
    return std::span<double, kNumSpecies>(x_.data() + (i - 1) * kNumSpecies, kNumSpecies);
  }
  std::span<const double, kNumLayerVars> layer(std::size_t j) const {
    return std::span<const double, kNumLayerVars>(x_.data() + layer_index(j, 0), kNumLayerVars);
  }
  std::span<double, kNumLayerVars> layer(std::size_t j) {
    return std::span<double, kNumLayerVars>(x_.data() + layer_index(j, 0), kNumLayerVars);
  }

  double operator[](std::size_t i) const { return x_[i]; }
  double& operator[](std::size_t i) { return x_[i]; }

  bool all_finite() const;
  bool all_nonnegative() const;

  /// Stored suspended solids in reactor and settler, kg.
  double stored_tss_kg(const PlantParams& params) const;

  bool operator==(const PlantState& o) const { return x_ == o.x_ && time_ == o.time_; }

 private:
  StateVector x_{};
  double time_ = 0.0;
};

class NonFiniteStateError : public std::runtime_error {
 public:
  NonFiniteStateError(std::size_t index, const std::string& what)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(std::size_t substep, std::size_t worst_index, const std::string& what)
      : std::runtime_error(what), substep_(substep), worst_index_(worst_index) {}
  std::size_t substep() const { return substep_; }
  std::size_t worst_index() const { return worst_index_; }

 private:
  std::size_t substep_;
  std::size_t worst_index_;
};

// Settler feed and underflow composition derived from compartment 5 and the bottom layer.
struct SettlerStreams {
  double q_f = 0.0;  // feed
  double q_u = 0.0;  // underflow (recycle + wastage)
  double q_e = 0.0;  // effluent
  double x_f = 0.0;  // feed TSS, g/m3
  // particulate fractions of compartment 5 (per unit TSS), species order
  std::array<double, kNumSpecies> particulate_ratio{};
  // concentrations of the recycle/wastage stream in species order
  std::array<double, kNumSpecies> underflow{};
};

SettlerStreams settler_streams(const StateVector& x, const InfluentRecord& d,
                               const PlantParams& params);

/// ASM1 process rates rho_1..rho_8 for a single compartment.
std::array<double, 8> asm1_process_rates(std::span<const double, kNumSpecies> c,
                                         const Asm1Kinetics& k);

/// Net conversion rates (g/m3/day) of each species for a single compartment.
std::array<double, kNumSpecies> asm1_conversion_rates(std::span<const double, kNumSpecies> c,
                                                      const Asm1Kinetics& k);

/// Time derivatives of the 65 reactor states.
std::array<double, kReactorDim> reactor_derivatives(const PlantState& state, const ControlInput& u,
                                                    const InfluentRecord& d,
                                                    const PlantParams& params);

/// Time derivatives of the 80 settler states. Feed enters the feed layer at Q0 + Qr.
std::array<double, kSettlerDim> settler_derivatives(const PlantState& state,
                                                    const InfluentRecord& d,
                                                    const PlantParams& params);

/// Takacs settling velocity (m/day) at TSS x given feed TSS x_f.
double settling_velocity(double x, double x_f, const TakacsSettling& s);

/// Downward gravity flux out of each layer (index 0..9, top-down); the last entry is zero.
std::array<double, kNumLayers> settler_gravity_flux(const StateVector& x, double x_f,
                                                    const TakacsSettling& s);

/// Full right-hand side; throws NonFiniteStateError if the state has a non-finite entry.
void plant_rhs(const StateVector& x, const ControlInput& u, const InfluentRecord& d,
               const PlantParams& params, StateVector& dxdt);

struct IntegratorOptions {
  double substep_days = 15.0 / 86400.0;  // 15 s
  bool clamp_negative = true;
};

struct StepStats {
  std::size_t substeps = 0;
  std::size_t clamped_entries = 0;
};

/// Advance the plant by dt days with fixed-step RK4; inputs are held constant across dt.
PlantState step(const PlantState& state, const ControlInput& u, const InfluentRecord& d,
                double dt, const PlantParams& params, const IntegratorOptions& opts = {},
                StepStats* stats = nullptr);

// ---- measurements ----------------------------------------------------------

inline constexpr std::size_t kNumMeasurements = 41;

/// State indices sampled by the 41 sensors, in measurement order.
const std::array<std::size_t, kNumMeasurements>& measurement_indices();
std::vector<std::string> measurement_names();

using MeasurementVector = std::array<double, kNumMeasurements>;

MeasurementVector measure(const PlantState& state);

/// Embed a measurement vector back into a zero state (inverse of the projection on its range).
StateVector embed_measurement(const MeasurementVector& y);

// Named positions inside the measurement vector.
struct MeasurementLayout {
  // compartment-5 entries
  std::size_t c5_s_i, c5_s_s, c5_x_i, c5_x_s, c5_x_bh, c5_x_ba, c5_x_p, c5_s_no, c5_s_nh, c5_s_nd,
      c5_x_nd;
  std::size_t top_first;     // first of 8 top-layer entries (layer var order)
  std::size_t bottom_first;  // first of 8 bottom-layer entries
  std::size_t middle_x_first;  // X of layers 2..9
  std::size_t c1_s_no, c2_s_no, c3_s_o, c4_s_o, c5_s_o, c3_s_nh;
};
const MeasurementLayout& measurement_layout();

// ---- reference states ------------------------------------------------------

/// Tabulated reference initial condition (reactor table plus the two settler tables).
PlantState reference_initial_state();

/// Constant average dry-weather influent used for the open-loop settling run.
InfluentRecord constant_dry_influent();

/// Constant actuation used for the settling run and by the constant-input baseline.
ControlInput steady_state_actuation();

struct SettleOptions {
  double days = 14.0;
  double sample_days = 15.0 / 1440.0;
  double divergence_bound = 1e7;
  IntegratorOptions integrator{};
};

/// Open-loop run under constant input and constant influent; returns the terminal state
/// with its clock reset to zero.
PlantState settle_to_steady_state(const PlantParams& params, const ControlInput& u,
                                  const InfluentRecord& influent, const SettleOptions& opts = {});

}  // namespace wwtp
