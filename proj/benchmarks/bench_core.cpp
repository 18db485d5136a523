#include <benchmark/benchmark.h>

#include <cmath>
#include <map>

#include "ek/evolution.hpp"
#include "ek/linop.hpp"
#include "ek/sim2d.hpp"
#include "ek/soliton.hpp"

using namespace ek;

namespace {

const ModelSpec& model() {
  static const ModelSpec m = madelung_model();
  return m;
}

const Endstate& endstate() {
  static const Endstate e = make_endstate(1.0, 0.0, 0.5);
  return e;
}

const SolitonProfile& profile(int n) {
  static const SolitonProfile base = compute_profile(model(), endstate(), 1024);
  static std::map<int, SolitonProfile> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, base.resample(Grid1D(n, base.grid.half_length()))).first;
  return it->second;
}

constexpr double kK0 = 0.5130025023;

}  // namespace

static void BM_Profile(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(compute_profile(model(), endstate(), static_cast<int>(st.range(0))));
}
BENCHMARK(BM_Profile)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);

static void BM_AssembleJL(benchmark::State& st) {
  const auto& p = profile(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(assemble(p, model(), kK0));
}
BENCHMARK(BM_AssembleJL)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

// Full dense eigensolve of JL(k0); dominates the growth-curve scan.
static void BM_EigenJL(benchmark::State& st) {
  const auto& p = profile(static_cast<int>(st.range(0)));
  const auto a = assemble(p, model(), kK0);
  for (auto _ : st) benchmark::DoNotOptimize(spectrum(a, Which::JL));
}
BENCHMARK(BM_EigenJL)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_GrowthRate(benchmark::State& st) {
  const auto& p = profile(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(growth_rate(p, model(), kK0));
}
BENCHMARK(BM_GrowthRate)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_PropagateIFRK4(benchmark::State& st) {
  const auto& p = profile(256);
  const auto gs = growth_rate(p, model(), kK0);
  PropagationOptions po;
  po.expm_max_dim = 0;
  for (auto _ : st)
    benchmark::DoNotOptimize(propagate_mode(p, model(), p.grid, kK0, *gs.mode, Forcing{}, 1.0, 0.01, po));
}
BENCHMARK(BM_PropagateIFRK4)->Unit(benchmark::kMillisecond);

static void BM_Sim2DRhs(benchmark::State& st) {
  const Sim2D sim(model(), profile(static_cast<int>(st.range(0))), static_cast<int>(st.range(1)), 2 * M_PI / kK0);
  const Field2D s = sim.base_state();
  for (auto _ : st) benchmark::DoNotOptimize(sim.rhs(s));
}
BENCHMARK(BM_Sim2DRhs)->Args({256, 32})->Args({512, 64})->Unit(benchmark::kMicrosecond);

static void BM_Sim2DStep(benchmark::State& st) {
  const Sim2D sim(model(), profile(static_cast<int>(st.range(0))), static_cast<int>(st.range(1)), 2 * M_PI / kK0);
  Field2D s = sim.base_state();
  const double dt = sim.default_dt();
  for (auto _ : st) {
    sim.step(s, dt);
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(1));
}
BENCHMARK(BM_Sim2DStep)->Args({256, 32})->Args({512, 64})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
