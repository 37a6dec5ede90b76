#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "support.hpp"
#include "wwtp/empc/empc.hpp"
#include "wwtp/indices/indices.hpp"
#include "wwtp/influent/influent.hpp"

using namespace wwtp;
using namespace wwtp::indices;

namespace {

const std::array<double, 5> kVolumes{1000.0, 1000.0, 1333.0, 1333.0, 1333.0};

// Hand evaluation straight from the state vector: layer-1 solids split by the
// compartment-5 particulate fractions.
CompositeEffluent composite_oracle(const PlantState& s) {
  const double xi = s[reactor_index(5, X_I)], xs = s[reactor_index(5, X_S)];
  const double xbh = s[reactor_index(5, X_BH)], xba = s[reactor_index(5, X_BA)];
  const double xp = s[reactor_index(5, X_P)], xnd = s[reactor_index(5, X_ND)];
  const double f = s[layer_index(1, L_X)] / (0.75 * (xi + xs + xbh + xba + xp));
  CompositeEffluent e;
  e.tss = s[layer_index(1, L_X)];
  e.cod = s[layer_index(1, L_S_S)] + s[layer_index(1, L_S_I)] + f * (xi + xs + xbh + xba + xp);
  e.bod = 0.25 * (s[layer_index(1, L_S_S)] + f * xs + 0.92 * f * (xbh + xba));
  e.s_nkj = s[layer_index(1, L_S_NH)] + s[layer_index(1, L_S_ND)] + f * xnd +
            0.08 * f * (xbh + xba) + 0.06 * f * (xp + xi);
  e.s_no = s[layer_index(1, L_S_NO)];
  return e;
}

std::vector<RateSample> sample_grid(int n, double dt, auto rate) {
  std::vector<RateSample> v;
  for (int k = 0; k <= n; ++k) {
    const double t = k * dt;
    v.push_back({t, rate(t), rate(t) / 2, 10.0, 20.0, 30.0, 1000.0});
  }
  return v;
}

}  // namespace

TEST(Composites, ZeroMeasurement) {
  const auto e = composites(MeasurementVector{});
  EXPECT_EQ(e.tss, 0.0);
  EXPECT_EQ(e.cod, 0.0);
  EXPECT_EQ(e.s_nkj, 0.0);
  EXPECT_EQ(e.s_no, 0.0);
  EXPECT_EQ(e.bod, 0.0);
}

TEST(Composites, OnlyInertSoluble) {
  MeasurementVector y{};
  y[measurement_layout().top_first + L_S_I] = 30.0;
  const auto e = composites(y);
  EXPECT_EQ(e.cod, 30.0);
  EXPECT_EQ(e.tss, 0.0);
  EXPECT_EQ(e.bod, 0.0);
}

TEST(Composites, ReferenceStateMatchesHandEvaluation) {
  const auto s = reference_initial_state();
  const auto e = composites(measure(s));
  const auto o = composite_oracle(s);
  EXPECT_NEAR(e.tss, o.tss, 1e-10);
  EXPECT_NEAR(e.cod, o.cod, 1e-10);
  EXPECT_NEAR(e.bod, o.bod, 1e-10);
  EXPECT_NEAR(e.s_nkj, o.s_nkj, 1e-10);
  EXPECT_NEAR(e.s_no, o.s_no, 1e-10);
  // frozen from the hand evaluation
  EXPECT_NEAR(e.tss, 12.500000, 1e-6);
  EXPECT_NEAR(e.cod, 47.474667, 1e-6);
  EXPECT_NEAR(e.bod, 2.631392, 1e-6);
  EXPECT_NEAR(e.s_nkj, 2.539816, 1e-6);
  EXPECT_NEAR(e.s_no, 13.520000, 1e-6);
}

TEST(EqRate, Arithmetic) {
  CompositeEffluent e;
  EXPECT_EQ(eq_rate(e, 0.0), 0.0);
  e.tss = 1.0;
  EXPECT_DOUBLE_EQ(eq_rate(e, 1000.0), 2.0);
  e = {10.0, 50.0, 5.0, 10.0, 5.0, 0.0};
  EXPECT_NEAR(eq_rate(e, 18061.0), 5960.13, 1e-9);
}

TEST(SpRate, Arithmetic) {
  WastageParticulates w;
  EXPECT_EQ(sp_rate(w, 385.0), 0.0);
  w.x_i = 1000.0;
  EXPECT_EQ(sp_rate(w, 0.0), 0.0);
  EXPECT_NEAR(sp_rate(w, 385.0), 288.75, 1e-9);
  WastageParticulates d{2000.0, 20.0, 40.0, 60.0, 80.0};
  WastageParticulates h{1000.0, 10.0, 20.0, 30.0, 40.0};
  EXPECT_NEAR(sp_rate(d, 385.0), 2.0 * sp_rate(h, 385.0), 1e-9);
}

TEST(AeRate, Arithmetic) {
  const std::array<double, 5> zero{};
  EXPECT_EQ(ae_rate(zero, kVolumes), 0.0);
  const std::array<double, 5> kla{0.0, 0.0, 240.0, 240.0, 84.0};
  EXPECT_NEAR(ae_rate(kla, kVolumes), 3341.39, 0.01);
}

TEST(PeRate, Arithmetic) {
  EXPECT_EQ(pe_rate(0.0, 0.0, 0.0), 0.0);
  EXPECT_NEAR(pe_rate(0.0, 18846.0, 385.0), 170.018, 1e-9);
  EXPECT_NEAR(pe_rate(55338.0, 18846.0, 385.0), 391.37, 1e-9);
}

TEST(MeRate, ThresholdBranch) {
  const std::array<double, 5> all_on{20.0, 20.0, 240.0, 240.0, 84.0};
  EXPECT_EQ(me_rate(all_on, kVolumes), 0.0);
  const std::array<double, 5> kla{0.0, 0.0, 240.0, 240.0, 84.0};
  EXPECT_EQ(me_rate(kla, kVolumes), 240.0);
  std::array<double, 5> below = kla, at = kla;
  below[4] = 19.99;
  at[4] = 20.0;
  EXPECT_NEAR(me_rate(below, kVolumes) - me_rate(at, kVolumes), 159.96, 1e-9);
}

TEST(MeRate, PiecewiseConstantWithBreakAtTwenty) {
  std::array<double, 5> kla{0.0, 0.0, 240.0, 240.0, 0.0};
  const double low = me_rate(kla, kVolumes);
  for (double v : {0.0, 5.0, 19.0, 19.999999}) {
    kla[4] = v;
    EXPECT_EQ(me_rate(kla, kVolumes), low);
  }
  for (double v : {20.0, 20.000001, 100.0, 240.0}) {
    kla[4] = v;
    EXPECT_EQ(me_rate(kla, kVolumes), 240.0);
  }
}

TEST(OciRate, ArithmeticAndMonotone) {
  EXPECT_EQ(oci_rate(0, 0, 0, 0), 0.0);
  EXPECT_NEAR(oci_rate(288.75, 3341.39, 391.37, 240.0), 5416.51, 1e-9);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  for (int i = 0; i < 200; ++i) {
    double a[4] = {u(rng), u(rng), u(rng), u(rng)};
    const double base = oci_rate(a[0], a[1], a[2], a[3]);
    a[i % 4] += u(rng);
    EXPECT_GE(oci_rate(a[0], a[1], a[2], a[3]), base);
  }
}

TEST(Linearity, RandomScaling) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 100.0), s(0.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    CompositeEffluent e{u(rng), u(rng), u(rng), u(rng), u(rng), 0.0};
    const double q = 100 * u(rng), a = s(rng);
    CompositeEffluent ea{a * e.tss, a * e.cod, a * e.s_nkj, a * e.s_no, a * e.bod, 0.0};
    EXPECT_NEAR(eq_rate(ea, q), a * eq_rate(e, q), 1e-9 * std::abs(a * eq_rate(e, q)) + 1e-12);
    EXPECT_NEAR(eq_rate(e, a * q), a * eq_rate(e, q), 1e-9 * std::abs(a * eq_rate(e, q)) + 1e-12);
    std::array<double, 5> k{u(rng), u(rng), u(rng), u(rng), u(rng)}, ka = k;
    for (double& v : ka) v *= a;
    EXPECT_NEAR(ae_rate(ka, kVolumes), a * ae_rate(k, kVolumes), 1e-9 * a * ae_rate(k, kVolumes) + 1e-12);
    const double qa = 1000 * u(rng), qr = 1000 * u(rng), qw = u(rng);
    EXPECT_NEAR(pe_rate(a * qa, a * qr, a * qw), a * pe_rate(qa, qr, qw),
                1e-9 * a * pe_rate(qa, qr, qw) + 1e-12);
  }
}

TEST(StageCost, WeightArithmetic) {
  IndexWeights w;
  EXPECT_DOUBLE_EQ(w.w_eq * 100.0 + w.w_oci * 200.0, 160.0);
  const PlantParams p;
  const auto y = measure(test::settled_state());
  const auto d = constant_dry_influent();
  const auto snap = stage_cost(y, steady_state_actuation(), d, p);
  EXPECT_DOUBLE_EQ(snap.stage_cost, snap.eq_rate + 0.3 * snap.oci_rate);
  EXPECT_DOUBLE_EQ(snap.oci_rate, 5 * snap.sp_rate + snap.ae_rate + snap.pe_rate + snap.me_rate);
  EXPECT_DOUBLE_EQ(effluent_flow(d, p), d.q0 - 385.0);
}

TEST(StageCost, ZeroPlant) {
  PlantParams p;
  p.q_r = p.q_w = 0.0;
  p.volume = {};
  const auto snap = stage_cost(MeasurementVector{}, ControlInput{0.0, 0.0}, InfluentRecord{}, p);
  EXPECT_EQ(snap.stage_cost, 0.0);
}

TEST(StageCost, NonnegativeOverAdmissibleSet) {
  const PlantParams p;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> f(0.0, 2.0), qa(0.0, ControlInput::kQaMax),
      kla(0.0, ControlInput::kKla5Max);
  const auto ref = test::settled_state();
  for (int i = 0; i < 200; ++i) {
    PlantState s = ref;
    for (std::size_t j = 0; j < kStateDim; ++j) s[j] *= f(rng);
    auto d = constant_dry_influent();
    d.q0 = 385.0 + 50000.0 * f(rng);
    EXPECT_GE(stage_cost(measure(s), ControlInput{qa(rng), kla(rng)}, d, p).stage_cost, 0.0);
  }
}

TEST(StageCost, ConstantAtSteadyState) {
  const auto series = influent::WeatherSeries(
      influent::Weather::Dry, {[] { auto d = constant_dry_influent(); d.time = 0.0; return d; }(),
                               [] { auto d = constant_dry_influent(); d.time = 2.0; return d; }()});
  empc::ConstantPolicy pol(steady_state_actuation());
  empc::ClosedLoopConfig cfg;
  cfg.days = 1.0;
  const auto r = empc::run_closed_loop(PlantParams{}, test::settled_state(), pol, series, cfg);
  ASSERT_FALSE(r.aborted);
  double lo = r.rows.front().c, hi = lo;
  for (const auto& row : r.rows) {
    lo = std::min(lo, row.c);
    hi = std::max(hi, row.c);
  }
  // the 14-day settle leaves a residual drift of about 1e-4 per day
  EXPECT_LT((hi - lo) / lo, 1e-3);
}

TEST(WindowedReport, ConstantRates) {
  const auto traj = sample_grid(96, 1.0 / 96, [](double) { return 500.0; });
  const auto r = windowed_report(traj, 0.0, 1.0);
  EXPECT_NEAR(r.eq, 500.0, 1e-9);
  EXPECT_NEAR(r.sp, 250.0, 1e-9);
  EXPECT_NEAR(r.ae, 10.0, 1e-9);
  EXPECT_NEAR(r.pe, 20.0, 1e-9);
  EXPECT_NEAR(r.me, 30.0, 1e-9);
  EXPECT_NEAR(r.oci, 5 * r.sp + r.ae + r.pe + r.me, 1e-9);
}

TEST(WindowedReport, StoredSolidsAccumulationEntersSp) {
  auto traj = sample_grid(10, 0.1, [](double) { return 100.0; });
  traj.back().stored_tss_kg += 40.0;
  EXPECT_NEAR(windowed_report(traj, 0.0, 1.0).sp, 50.0 + 40.0, 1e-9);
}

TEST(WindowedReport, WindowOutsideTrajectory) {
  const auto traj = sample_grid(10, 0.1, [](double) { return 1.0; });
  EXPECT_THROW(windowed_report(traj, 0.0, 2.0), std::out_of_range);
  EXPECT_THROW(windowed_report(traj, 0.05, 0.5), std::out_of_range);
  EXPECT_THROW(windowed_report(traj, 0.0, 0.0), std::invalid_argument);
}

TEST(WindowedReport, AdditiveOverConcatenatedWindows) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RateSample> traj;
  for (int k = 0; k <= 200; ++k) {
    traj.push_back({k * 0.01, 100 * u(rng), 50 * u(rng), 10 * u(rng), 5 * u(rng), 3 * u(rng),
                    1000 + 10 * u(rng)});
  }
  const auto all = windowed_report(traj, 0.0, 2.0);
  const auto a = windowed_report(traj, 0.0, 0.7);
  const auto b = windowed_report(traj, 0.7, 1.3);
  auto mix = [](double x, double y) { return (0.7 * x + 1.3 * y) / 2.0; };
  EXPECT_NEAR(all.eq, mix(a.eq, b.eq), 1e-10);
  EXPECT_NEAR(all.sp, mix(a.sp, b.sp), 1e-10);
  EXPECT_NEAR(all.ae, mix(a.ae, b.ae), 1e-10);
  EXPECT_NEAR(all.pe, mix(a.pe, b.pe), 1e-10);
  EXPECT_NEAR(all.me, mix(a.me, b.me), 1e-10);
  EXPECT_NEAR(all.oci, mix(a.oci, b.oci), 1e-9);
}

TEST(WindowedReport, TrapezoidAgreesWithOversampledRectangles) {
  // one closed-loop day at 1.5 min sampling under constant influent; inputs switch only on
  // the 15 min grid
  const double fine = 1.5 / 1440.0;
  influent::ExcitationConfig ex;
  ex.hold = 40;
  ex.seed = 8;
  auto coarse_seq = influent::excitation_sequence(ex, 96);
  std::vector<ControlInput> seq;
  for (const auto& u : coarse_seq) seq.insert(seq.end(), 10, u);
  empc::SequencePolicy pol("excitation", seq);
  empc::ClosedLoopConfig cfg;
  cfg.days = 1.0;
  cfg.sample_days = fine;
  auto d0 = constant_dry_influent(), d1 = d0;
  d0.time = 0.0;
  d1.time = 2.0;
  const influent::WeatherSeries weather(influent::Weather::Dry, {d0, d1});
  const auto r = empc::run_closed_loop(PlantParams{}, test::settled_state(), pol, weather, cfg);
  ASSERT_FALSE(r.aborted);
  ASSERT_EQ(r.samples.size(), 961u);

  std::vector<RateSample> coarse;
  for (std::size_t k = 0; k < r.samples.size(); k += 10) coarse.push_back(r.samples[k]);
  const auto trap = windowed_report(coarse, 0.0, 1.0);

  // left rectangles on the 10x grid
  double eq = 0.0, sp = 0.0, ae = 0.0;
  for (std::size_t k = 0; k + 1 < r.samples.size(); ++k) {
    eq += fine * r.samples[k].eq_rate;
    sp += fine * r.samples[k].sp_rate;
    ae += fine * r.samples[k].ae_rate;
  }
  sp += r.samples.back().stored_tss_kg - r.samples.front().stored_tss_kg;
  EXPECT_NEAR(trap.eq / eq, 1.0, 1e-4);
  EXPECT_NEAR(trap.sp / sp, 1.0, 1e-4);
  EXPECT_NEAR(trap.ae / ae, 1.0, 1e-12);
}

TEST(ReportWriters, CsvAndText) {
  WindowReport r{0.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 22.0};
  std::ostringstream csv, txt;
  write_report_csv(csv, r);
  EXPECT_EQ(csv.str(), "index,value\nEQ,1\nSP,2\nAE,3\nPE,4\nME,5\nOCI,22\n");
  write_report_text(txt, r, 123.0, 0.5);
  EXPECT_NE(txt.str().find("stage_cost=123"), std::string::npos);
}
