#include <benchmark/benchmark.h>

#include "swirl/environments.hpp"
#include "swirl/inference.hpp"
#include "swirl/soft_q.hpp"
#include "swirl/trainer.hpp"

using namespace swirl;

namespace {

const std::pair<DiscreteHmMdp, GroundTruth>& gridworld() {
  static const auto g = build_gridworld(GridworldSpec{});
  return g;
}

const std::vector<Trajectory>& gridworld_data() {
  static const auto d = sample_trajectories(gridworld().first, 160, 500, 0).trajectories;
  return d;
}

// Arg 0: Anderson depth (0 = shifted plain sweeps).
void BM_SoftQGridworld(benchmark::State& state) {
  const auto& m = gridworld().first;
  const auto kernel = augmented_env_kernel(m.env, m.spaces);
  SoftQOptions o;
  o.anderson_memory = static_cast<int>(state.range(0));
  o.max_iters = 2000;
  int sweeps = 0;
  for (auto _ : state) {
    const QTable q = soft_q_iterate(m.rewards.mode(0), kernel, m.gamma, m.alpha, o);
    sweeps = q.iterations_run;
    benchmark::DoNotOptimize(q.values.data());
  }
  state.counters["sweeps"] = sweeps;
}
BENCHMARK(BM_SoftQGridworld)->Arg(0)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_BellmanSweep(benchmark::State& state) {
  const auto& m = gridworld().first;
  const auto kernel = augmented_env_kernel(m.env, m.spaces);
  const auto r = m.rewards.mode(0);
  std::vector<double> q(r.size(), 0.0), out(r.size());
  for (auto _ : state) {
    soft_bellman_sweep(r, kernel, m.gamma, m.alpha, q, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(r.size()));
}
BENCHMARK(BM_BellmanSweep);

void BM_ForwardBackward(benchmark::State& state) {
  const auto& m = gridworld().first;
  const auto policies = solve_policies(m, augmented_env_kernel(m.env, m.spaces));
  const Trajectory& tr = gridworld_data().front();
  for (auto _ : state) {
    const ModePosteriors p = forward_backward(tr, m, policies);
    benchmark::DoNotOptimize(p.log_likelihood);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(tr.length()));
}
BENCHMARK(BM_ForwardBackward);

// Full E-step over the default training split; arg is the worker count.
void BM_EStep(benchmark::State& state) {
  const auto& m = gridworld().first;
  const auto& data = gridworld_data();
  for (auto _ : state) {
    const EStepResult e = e_step(m, data, {}, static_cast<std::size_t>(state.range(0)));
    benchmark::DoNotOptimize(e.total_ll);
  }
}
BENCHMARK(BM_EStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
