#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wwtp/influent/influent.hpp"

using namespace wwtp;
using namespace wwtp::influent;

namespace {

std::string row(double t, double q0) {
  std::ostringstream s;
  s << t << ' ' << q0;
  for (int i = 0; i < 13; ++i) s << ' ' << 10.0 + i;
  return s.str();
}

}  // namespace

TEST(WeatherParse, TwoRows) {
  std::istringstream in("# dry\n" + row(0.0, 18446) + "\n\n" + row(0.0104, 18000) + "\n");
  const auto s = parse_weather(in, Weather::Dry);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s.span_days(), 0.0104);
  EXPECT_EQ(s.records()[1].q0, 18000.0);
  EXPECT_EQ(s.records()[1].z0[X_ND], 21.0);
}

TEST(WeatherParse, CommaSeparated) {
  std::string r = row(0.5, 100);
  std::replace(r.begin(), r.end(), ' ', ',');
  std::istringstream in(row(0.0, 100) + "\n" + r + "\n");
  EXPECT_EQ(parse_weather(in, Weather::Rain).size(), 2u);
}

TEST(WeatherParse, NegativeFlowRejectedWithLine) {
  std::istringstream in(row(0.0, 100) + "\n# note\n" + row(0.01, -5) + "\n");
  try {
    parse_weather(in, Weather::Dry);
    FAIL() << "expected InfluentFormatError";
  } catch (const InfluentFormatError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(WeatherParse, MalformedAndNonMonotoneRows) {
  std::istringstream short_row(row(0.0, 100) + "\n0.01 100 1 2\n");
  EXPECT_THROW(parse_weather(short_row, Weather::Dry), InfluentFormatError);
  std::istringstream garbage(row(0.0, 100) + "\n0.01 abc" + row(0, 1).substr(3) + "\n");
  EXPECT_THROW(parse_weather(garbage, Weather::Dry), InfluentFormatError);
  std::istringstream backwards(row(0.02, 100) + "\n" + row(0.01, 100) + "\n");
  try {
    parse_weather(backwards, Weather::Dry);
    FAIL();
  } catch (const InfluentFormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(WeatherSeries, ZeroOrderHold) {
  std::istringstream in(row(0.0, 100) + "\n" + row(0.5, 200) + "\n" + row(1.0, 300) + "\n");
  const auto s = parse_weather(in, Weather::Storm);
  EXPECT_EQ(s.at(0.0).q0, 100.0);
  EXPECT_EQ(s.at(0.4999).q0, 100.0);
  EXPECT_EQ(s.at(0.5).q0, 200.0);
  EXPECT_EQ(s.at(0.75).q0, 200.0);
  EXPECT_EQ(s.at(1.0).q0, 300.0);
  EXPECT_THROW(s.at(-0.01), std::out_of_range);
  EXPECT_THROW(s.at(1.01), std::out_of_range);
}

TEST(WeatherSeries, WriteParseRoundTripReproducesRecords) {
  const auto s = synthesize_weather(Weather::Rain, {2.0, 15.0 / 1440.0, 5});
  std::stringstream buf;
  write_weather(buf, s);
  const auto back = parse_weather(buf, Weather::Rain);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& r = s.records()[i];
    const auto& h = back.at(r.time);
    EXPECT_EQ(h.time, r.time);
    EXPECT_EQ(h.q0, r.q0);
    EXPECT_EQ(h.z0, r.z0);
  }
}

TEST(Synthesize, CoversFourteenDaysAndIsDeterministic) {
  for (auto w : kAllWeathers) {
    const auto a = synthesize_weather(w);
    EXPECT_GE(a.span_days(), 14.0);
    EXPECT_EQ(a.label(), w);
    for (std::size_t i = 1; i < a.size(); ++i) {
      ASSERT_GT(a.records()[i].time, a.records()[i - 1].time);
      ASSERT_GT(a.records()[i].q0, 0.0);
    }
    const auto b = synthesize_weather(w);
    EXPECT_EQ(a.records().back().q0, b.records().back().q0);
  }
}

TEST(Synthesize, WetWeatherCarriesMoreWater) {
  auto volume = [](const WeatherSeries& s) {
    double v = 0.0;
    for (const auto& r : s.records()) v += r.q0;
    return v;
  };
  const double dry = volume(synthesize_weather(Weather::Dry));
  EXPECT_GT(volume(synthesize_weather(Weather::Rain)), dry);
  EXPECT_GT(volume(synthesize_weather(Weather::Storm)), dry);
}

TEST(WeatherNames, RoundTrip) {
  for (auto w : kAllWeathers) EXPECT_EQ(weather_from_string(to_string(w)), w);
  EXPECT_THROW(weather_from_string("hail"), std::invalid_argument);
}

TEST(Excitation, NoNoiseGivesHolds) {
  ExcitationConfig cfg;
  cfg.noise_scale = 0.0;
  const auto seq = excitation_sequence(cfg, 200);
  ASSERT_EQ(seq.size(), 200u);
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const auto& head = seq[k - k % 20];
    EXPECT_EQ(seq[k].q_a, head.q_a);
    EXPECT_EQ(seq[k].kla5, head.kla5);
  }
  EXPECT_NE(seq[0].q_a, seq[20].q_a);
}

TEST(Excitation, WithinBoxAndDeterministic) {
  for (double noise : {0.05, 0.5, 5.0}) {
    ExcitationConfig cfg;
    cfg.noise_scale = noise;
    cfg.seed = 11;
    const auto a = excitation_sequence(cfg, 5000);
    for (const auto& u : a) ASSERT_TRUE(u.within_bounds());
    const auto b = excitation_sequence(cfg, 5000);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), [](auto& x, auto& y) {
      return x.q_a == y.q_a && x.kla5 == y.kla5;
    }));
    cfg.seed = 12;
    const auto c = excitation_sequence(cfg, 5000);
    EXPECT_NE(a[0].q_a, c[0].q_a);
  }
}

TEST(Excitation, BaseValuesUniformOverBox) {
  ExcitationConfig cfg;
  cfg.noise_scale = 0.0;
  cfg.hold = 1;
  const auto seq = excitation_sequence(cfg, 20000);
  double qa = 0.0, kla = 0.0;
  for (const auto& u : seq) {
    qa += u.q_a;
    kla += u.kla5;
  }
  qa /= seq.size();
  kla /= seq.size();
  EXPECT_NEAR(qa, ControlInput::kQaMax / 2, 0.05 * ControlInput::kQaMax / 2);
  EXPECT_NEAR(kla, ControlInput::kKla5Max / 2, 0.05 * ControlInput::kKla5Max / 2);
}

TEST(Excitation, NoiseIsRelativeStd) {
  ExcitationConfig cfg;
  cfg.hold = 1000000;
  cfg.noise_scale = 0.05;
  const auto seq = excitation_sequence(cfg, 20000);
  ExcitationConfig base = cfg;
  base.noise_scale = 0.0;
  const double ubar = excitation_sequence(base, 1)[0].kla5;
  double m = 0.0, v = 0.0;
  for (const auto& u : seq) m += u.kla5;
  m /= seq.size();
  for (const auto& u : seq) v += (u.kla5 - m) * (u.kla5 - m);
  const double sd = std::sqrt(v / (seq.size() - 1));
  if (ubar * 1.2 < ControlInput::kKla5Max && ubar > 0.0) {
    EXPECT_NEAR(sd, 0.05 * ubar, 0.05 * 0.05 * ubar);
  }
}

TEST(Excitation, CsvHasHeaderAndRows) {
  std::ostringstream out;
  write_excitation_csv(out, excitation_sequence({}, 3));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,Qa,KLa5");
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 3);
}
