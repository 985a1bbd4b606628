#include "ponita/attributes.hpp"
#include "ponita/audit.hpp"
#include "ponita/models.hpp"
#include "ponita/nbody.hpp"
#include "ponita/ops.hpp"
#include "ponita/sphere_grid.hpp"
#include "ponita/training.hpp"

#include <benchmark/benchmark.h>

using namespace ponita;

namespace {

nn::ModelConfig bench_config(std::size_t grid) {
  nn::ModelConfig cfg;
  cfg.scalar_inputs = 2;
  cfg.vector_inputs = 2;
  cfg.edge_extra = 1;
  cfg.layers = 2;
  cfg.channels = 32;
  cfg.basis_dim = 32;
  cfg.grid_size = grid;
  cfg.readout = nn::Readout::Vector;
  return cfg;
}

void BM_AttributeR3S2(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto a = attributes::random_point(attributes::SpaceTag::R3xS2, rng);
  const auto b = attributes::random_point(attributes::SpaceTag::R3xS2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(attributes::attr_r3s2(a, b));
}
BENCHMARK(BM_AttributeR3S2);

void BM_RepulsionGrid(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(grids::repulsion_grid(3, n, 0));
}
BENCHMARK(BM_RepulsionGrid)->Arg(12)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ad::Tape<double> tape;
  const auto x = tape.constant(ad::Array<double>({n, n}, std::vector<double>(n * n, 0.5)));
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(x, x).value().data.data());
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

// Forward pass of a two-block network on a fully connected 5-body graph.
void BM_PonitaForward(benchmark::State& state) {
  const auto cfg = bench_config(static_cast<std::size_t>(state.range(0)));
  const nn::Ponita<double> model(cfg);
  std::mt19937_64 rng(2);
  const auto g = audit::random_graph(rng, 3, 5, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
  for (auto _ : state) {
    ad::Tape<double> tape;
    benchmark::DoNotOptimize(model.forward(tape, g).vector.value().data.data());
  }
}
BENCHMARK(BM_PonitaForward)->Arg(12)->Arg(20)->Unit(benchmark::kMicrosecond);

void BM_PonitaForwardBackward(benchmark::State& state) {
  const auto cfg = bench_config(static_cast<std::size_t>(state.range(0)));
  nn::Ponita<double> model(cfg);
  std::mt19937_64 rng(2);
  const auto g = audit::random_graph(rng, 3, 5, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
  for (auto _ : state) {
    ad::Tape<double> tape;
    tape.backward(ad::mean_all(ad::square(model.forward(tape, g).vector)));
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_PonitaForwardBackward)->Arg(12)->Arg(20)->Unit(benchmark::kMicrosecond);

void BM_PnitaForward(benchmark::State& state) {
  auto cfg = bench_config(1);
  cfg.readout = nn::Readout::Scalar;
  const nn::Pnita<double> model(cfg);
  std::mt19937_64 rng(2);
  const auto g = audit::random_graph(rng, 3, 5, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
  for (auto _ : state) {
    ad::Tape<double> tape;
    benchmark::DoNotOptimize(model.forward(tape, g).scalar.value().data.data());
  }
}
BENCHMARK(BM_PnitaForward)->Unit(benchmark::kMicrosecond);

void BM_EnergyAndForces(benchmark::State& state) {
  auto cfg = bench_config(12);
  cfg.readout = nn::Readout::Scalar;
  const nn::Ponita<double> model(cfg);
  std::mt19937_64 rng(3);
  const auto g = audit::random_graph(rng, 3, 6, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
  for (auto _ : state) benchmark::DoNotOptimize(nn::energy_and_forces(model, g).forces.data());
}
BENCHMARK(BM_EnergyAndForces)->Unit(benchmark::kMicrosecond);

void BM_NBodyTrajectory(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto s = nbody::random_state(rng);
  const nbody::Physics phys;
  for (auto _ : state) benchmark::DoNotOptimize(nbody::integrate(s, phys, phys.steps).positions.data());
}
BENCHMARK(BM_NBodyTrajectory)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
