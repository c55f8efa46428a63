#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "enkbs/aci.hpp"
#include "enkbs/experiments.hpp"
#include "enkbs/models.hpp"

using namespace enkbs;

namespace {

Eigen::MatrixXd mat1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }
Eigen::VectorXd vec1(double v) { return Eigen::VectorXd::Constant(1, v); }

struct DyadAciFixture {
  DyadConfig cfg;
  DyadTruth truth;
  PartitionedModel pm;
  FilterRun frun;
  SmootherRun srun;

  explicit DyadAciFixture(double coupling = 2.0, Eigen::Index m = 50,
                          std::uint64_t seed = 808, double t_end = 30.0) {
    cfg.coupling = coupling;
    truth = make_dyad_truth(cfg, 0.005, t_end, 5.0, 4242, coupling > 0.0);
    pm = make_dyad_model(cfg, DyadDirection::HiddenV);
    const NoiseStream noise(seed);
    const Eigen::MatrixXd init =
        perturbed_initial_ensemble(truth.v.values.col(0), 0.1, m, noise);
    frun = run_filter(pm.sde, truth.u.grid, truth.u, init, noise);
    REQUIRE(frun.ok());
    srun = run_smoother(frun, pm.sde, truth.u.grid, truth.u);
    REQUIRE(srun.ok());
  }
};

}  // namespace

TEST_CASE("gaussian KL closed-form values") {
  CHECK(gaussian_kl(vec1(0.0), mat1(1.0), vec1(0.0), mat1(1.0)) ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(gaussian_kl(vec1(1.0), mat1(1.0), vec1(0.0), mat1(1.0)) ==
        doctest::Approx(0.5).epsilon(1e-6));
  CHECK(gaussian_kl(vec1(0.0), mat1(2.0), vec1(0.0), mat1(1.0)) ==
        doctest::Approx(0.5 * (2.0 - 1.0 - std::log(2.0))).epsilon(1e-6));
}

TEST_CASE("gaussian KL is nonnegative on random moment pairs") {
  const NoiseStream noise(66);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd a(4, 9), b(4, 9);
    noise.fill_gaussian_matrix(NoiseTag::Generic, 2 * trial, a);
    noise.fill_gaussian_matrix(NoiseTag::Generic, 2 * trial + 1, b);
    const double kl = gaussian_kl(empirical_mean(a), empirical_cov(a), empirical_mean(b),
                                  empirical_cov(b));
    CHECK(kl >= -1e-10);
  }
}

TEST_CASE("aci metric vanishes for identical series") {
  const DyadAciFixture fx;
  const auto series = aci_metric_series(fx.frun.moments, fx.frun.moments);
  for (const double v : series) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("lag zero returns the filter, the full lag returns the smoother") {
  const DyadAciFixture fx;
  const TimeGrid& grid = fx.truth.u.grid;

  std::vector<std::size_t> eval_steps = {0, grid.steps / 2, grid.steps};
  const double full_window = grid.t_end();
  const auto lagged = lagged_smoother_sweep(fx.frun, fx.pm.sde, grid, fx.truth.u,
                                            {0.0, full_window}, eval_steps);
  REQUIRE(lagged.size() == 2);

  for (std::size_t e = 0; e < eval_steps.size(); ++e) {
    const auto kk = static_cast<Eigen::Index>(eval_steps[e]);
    CHECK(lagged[0].means(0, static_cast<Eigen::Index>(e)) == fx.frun.moments.means(0, kk));
    CHECK(lagged[0].covs[e](0, 0) == fx.frun.moments.covs[eval_steps[e]](0, 0));
    // The full-window lag reproduces the full backward pass.
    CHECK(lagged[1].means(0, static_cast<Eigen::Index>(e)) ==
          doctest::Approx(fx.srun.moments.means(0, kk)).epsilon(1e-12));
    CHECK(lagged[1].covs[e](0, 0) ==
          doctest::Approx(fx.srun.moments.covs[eval_steps[e]](0, 0)).epsilon(1e-12));
  }
}

TEST_CASE("information gain grows with the assimilation window") {
  const DyadAciFixture fx;
  const TimeGrid& grid = fx.truth.u.grid;

  std::vector<std::size_t> eval_steps;
  for (std::size_t k = 0; k + 2000 <= grid.steps; k += 40) eval_steps.push_back(k);
  const std::vector<double> lags = uniform_lags(8, 8.0);
  const auto lagged = lagged_smoother_sweep(fx.frun, fx.pm.sde, grid, fx.truth.u, lags, eval_steps);

  double prev_avg = -1.0;
  for (std::size_t l = 0; l < lagged.size(); ++l) {
    double avg = 0.0;
    for (std::size_t e = 0; e < eval_steps.size(); ++e) {
      const auto kk = static_cast<Eigen::Index>(eval_steps[e]);
      avg += gaussian_kl(lagged[l].means.col(static_cast<Eigen::Index>(e)), lagged[l].covs[e],
                         fx.frun.moments.means.col(kk), fx.frun.moments.covs[eval_steps[e]]);
    }
    avg /= static_cast<double>(eval_steps.size());
    // Time-averaged gain is nondecreasing in the lag up to Monte Carlo slack.
    if (prev_avg >= 0.0) CHECK(avg >= prev_avg - std::max(0.05 * prev_avg, 1e-4));
    prev_avg = avg;
  }
}

TEST_CASE("cir is nondecreasing in the saturation fraction") {
  const DyadAciFixture fx;
  const TimeGrid& grid = fx.truth.u.grid;

  CirOptions low;
  low.lags = uniform_lags(15, 10.0);
  low.saturation = 0.5;
  low.eval_stride = 200;
  CirOptions high = low;
  high.saturation = 0.95;

  const auto series_low = compute_aci_cir(fx.frun, fx.srun, fx.pm.sde, grid, fx.truth.u, low);
  const auto series_high = compute_aci_cir(fx.frun, fx.srun, fx.pm.sde, grid, fx.truth.u, high);
  REQUIRE(series_low.cir.size() == series_high.cir.size());
  for (std::size_t e = 0; e < series_low.cir.size(); ++e)
    CHECK(series_low.cir[e] <= series_high.cir[e] + 1e-12);
}

TEST_CASE("decoupled dyad carries no detectable causal signal") {
  const DyadAciFixture fx(0.0);
  const TimeGrid& grid = fx.truth.u.grid;

  CirOptions cir;
  cir.lags = uniform_lags(10, 10.0);
  cir.eval_stride = 100;
  const auto series = compute_aci_cir(fx.frun, fx.srun, fx.pm.sde, grid, fx.truth.u, cir);

  double mean_metric = 0.0;
  for (const double v : series.metric) mean_metric += v;
  mean_metric /= static_cast<double>(series.metric.size());
  CHECK(mean_metric < 1e-3);
  for (const double c : series.cir) CHECK(c == 0.0);
}

TEST_CASE("strong coupling produces a structurally nonzero metric") {
  const DyadAciFixture fx;
  const auto series = aci_metric_series(fx.frun.moments, fx.srun.moments);
  const double mean_metric =
      std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(series.size());
  CHECK(mean_metric > 1e-2);
}
