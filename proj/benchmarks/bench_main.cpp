#include <benchmark/benchmark.h>

#include <random>

#include "wwtp/dioko/model.hpp"
#include "wwtp/empc/empc.hpp"
#include "wwtp/nn/mlp.hpp"
#include "wwtp/plant/plant.hpp"
#include "wwtp/qp/qp.hpp"

using namespace wwtp;

namespace {

const PlantState& steady() {
  static const PlantState s = settle_to_steady_state(PlantParams{}, steady_state_actuation(),
                                                     constant_dry_influent());
  return s;
}

dioko::Model plant_model(int latent) {
  dioko::Model m({41, 14, 2, latent, {128, 128}}, 1);
  const auto y = measure(steady());
  m.y_std.mean = Eigen::Map<const dioko::Vector>(y.data(), 41);
  m.y_std.scale = (m.y_std.mean.cwiseAbs().array() * 0.1 + 1.0).matrix();
  const auto d = constant_dry_influent().as_vector();
  m.d_std.mean = Eigen::Map<const dioko::Vector>(d.data(), 14);
  m.d_std.scale = (m.d_std.mean.cwiseAbs().array() * 0.2 + 1.0).matrix();
  m.u_std.mean = (dioko::Vector(2) << 46115.0, 120.0).finished();
  m.u_std.scale = (dioko::Vector(2) << 26600.0, 69.0).finished();
  m.c_mean = 5000.0;
  m.c_scale = 800.0;
  return m;
}

}  // namespace

static void BM_PlantStep(benchmark::State& state) {
  const PlantParams p;
  const auto u = steady_state_actuation();
  const auto d = constant_dry_influent();
  PlantState s = steady();
  for (auto _ : state) {
    s = step(s, u, d, 15.0 / 1440.0, p);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_PlantStep)->Unit(benchmark::kMicrosecond);

static void BM_QpSolve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  qp::Matrix m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  qp::QPProblem p{m * m.transpose() / n + 1e-3 * qp::Matrix::Identity(n, n), qp::Vector(n),
                  -qp::Vector::Ones(n), qp::Vector::Ones(n)};
  for (int i = 0; i < n; ++i) p.g(i) = 2.0 * g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(qp::solve(p));
}
BENCHMARK(BM_QpSolve)->Arg(4)->Arg(20)->Arg(60)->Unit(benchmark::kMicrosecond);

static void BM_Condense(benchmark::State& state) {
  const auto m = plant_model(60);
  const empc::Condenser c(m, empc::EMPCConfig{});
  const auto y = measure(steady());
  const auto d = constant_dry_influent().as_vector();
  const dioko::Vector psi0 = m.encode(Eigen::Map<const dioko::Vector>(y.data(), 41),
                                      Eigen::Map<const dioko::Vector>(d.data(), 14));
  for (auto _ : state) benchmark::DoNotOptimize(c.condense(psi0));
}
BENCHMARK(BM_Condense)->Unit(benchmark::kMicrosecond);

static void BM_ControllerStep(benchmark::State& state) {
  auto m = std::make_shared<const dioko::Model>(plant_model(60));
  empc::Controller ctl(m, empc::EMPCConfig{});
  const auto y = measure(steady());
  const auto d = constant_dry_influent();
  empc::StepDiagnostics diag;
  for (auto _ : state) benchmark::DoNotOptimize(ctl.step(y, d, &diag));
}
BENCHMARK(BM_ControllerStep)->Unit(benchmark::kMillisecond);

static void BM_MlpForward(benchmark::State& state) {
  nn::MLPSpec spec;
  const auto params = nn::init_params(spec, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  nn::Matrix x(spec.input, state.range(0));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::mlp_eval(spec, params, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
