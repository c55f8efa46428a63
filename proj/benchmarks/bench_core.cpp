#include <benchmark/benchmark.h>

#include "enkbs/discovery.hpp"
#include "enkbs/experiments.hpp"
#include "enkbs/filter.hpp"
#include "enkbs/localization.hpp"
#include "enkbs/smoother.hpp"

using namespace enkbs;

static void NoiseDraw(benchmark::State& state) {
  const NoiseStream noise(1);
  Eigen::MatrixXd block(state.range(0), 10);
  std::uint64_t step = 0;
  for (auto _ : state) {
    noise.fill_gaussian_matrix(NoiseTag::EnsembleSignal, step++, block);
    benchmark::DoNotOptimize(block.data());
  }
  state.SetItemsProcessed(state.iterations() * block.size());
}
BENCHMARK(NoiseDraw)->Arg(20)->Arg(40);

static void Lorenz96Drift(benchmark::State& state) {
  const Lorenz96Config cfg;
  const NoiseStream noise(2);
  Eigen::MatrixXd x(40, state.range(0)), rate(40, state.range(0));
  noise.fill_gaussian_matrix(NoiseTag::Generic, 0, x);
  for (auto _ : state) {
    lorenz96_drift(x, cfg, rate);
    benchmark::DoNotOptimize(rate.data());
  }
}
BENCHMARK(Lorenz96Drift)->Arg(10)->Arg(100);

static void GaspariCohnTaper(benchmark::State& state) {
  for (auto _ : state) {
    const LocalizationMatrix loc = build_periodic_localization(state.range(0), 3.0);
    benchmark::DoNotOptimize(loc.taper.data());
  }
}
BENCHMARK(GaspariCohnTaper)->Arg(40)->Arg(160);

static void FilterStepL96(benchmark::State& state) {
  const PartitionedModel pm = make_lorenz96_model(Lorenz96Config{});
  const TimeGrid grid(0.0, 0.005, 1);
  const NoiseStream noise(3);
  const LocalizationMatrix loc = build_periodic_localization(40, 3.0);
  FilterOptions opts;
  opts.taper_xh = loc.block(pm.hidden_idx, pm.observed_idx);
  opts.inflation = std::sqrt(1.005);

  EnsembleState ens;
  ens.members = perturbed_initial_ensemble(Eigen::VectorXd::Constant(20, 2.0), 0.5,
                                           state.range(0), noise);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 2.0);
  const Eigen::VectorXd dy = Eigen::VectorXd::Constant(20, 0.01);
  for (auto _ : state) {
    EnsembleState next = enkbf_step(ens, pm.sde, grid, y, dy, noise, opts);
    benchmark::DoNotOptimize(next.members.data());
  }
}
BENCHMARK(FilterStepL96)->Arg(10)->Arg(40);

static void SmootherStepL96(benchmark::State& state) {
  const PartitionedModel pm = make_lorenz96_model(Lorenz96Config{});
  const TimeGrid grid(0.0, 0.005, 2);
  const NoiseStream noise(4);
  const LocalizationMatrix loc = build_periodic_localization(40, 3.0);
  SmootherOptions opts;
  opts.taper_ff = loc.block(pm.hidden_idx, pm.hidden_idx);

  const Eigen::MatrixXd members = perturbed_initial_ensemble(
      Eigen::VectorXd::Constant(20, 2.0), 0.5, state.range(0), noise);
  const Eigen::MatrixXd cov = empirical_cov(members);
  Eigen::MatrixXd noise_b(20, state.range(0));
  noise.fill_gaussian_matrix(NoiseTag::EnsembleSignal, 0, noise_b);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 2.0);
  for (auto _ : state) {
    Eigen::MatrixXd prev = enkbs_step(members, members, cov, noise_b, pm.sde, grid, y, 0, opts);
    benchmark::DoNotOptimize(prev.data());
  }
}
BENCHMARK(SmootherStepL96)->Arg(10)->Arg(40);

static void CausationEntropyL84(benchmark::State& state) {
  const CandidateLibrary lib = lorenz84_library();
  const Lorenz84Config cfg;
  const TruthPaths truth =
      make_lorenz84_truth(cfg, 0.001, static_cast<double>(state.range(0)), 5.0, 1);
  Eigen::MatrixXd states(3, truth.state.values.cols());
  states.row(0) = truth.state.values.row(0);
  states.row(1) = truth.obs.values.row(0);
  states.row(2) = truth.obs.values.row(1);
  for (auto _ : state) {
    const auto ce = causation_entropy_matrix(states, 0.001, lib, 10);
    benchmark::DoNotOptimize(ce.ce.data());
  }
}
BENCHMARK(CausationEntropyL84)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
