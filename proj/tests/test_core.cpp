#include <doctest.h>

#include <cmath>

#include "enkbs/sde.hpp"

using namespace enkbs;

namespace {

// Pure-state model: no observation dynamics, optional signal noise.
SdeModel scalar_model(double drift_coef, double noise_var) {
  BatchDrift f = [drift_coef](const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>&, double,
                              Eigen::Ref<Eigen::MatrixXd> out) { out = drift_coef * x; };
  BatchDrift h = [](const Eigen::Ref<const Eigen::MatrixXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>&, double,
                    Eigen::Ref<Eigen::MatrixXd> out) { out.setZero(); };
  return make_model(1, 1, std::move(f), std::move(h),
                    Eigen::MatrixXd::Constant(1, 1, noise_var), Eigen::MatrixXd::Zero(1, 1));
}

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

TEST_CASE("noise stream is deterministic per key") {
  const NoiseStream noise(42);
  const Eigen::VectorXd a = noise.gaussians(NoiseTag::EnsembleSignal, 3, 17, 8);
  const Eigen::VectorXd b = noise.gaussians(NoiseTag::EnsembleSignal, 3, 17, 8);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  // Distinct members, steps, and tags give distinct draws.
  CHECK((a - noise.gaussians(NoiseTag::EnsembleSignal, 4, 17, 8)).norm() > 0.0);
  CHECK((a - noise.gaussians(NoiseTag::EnsembleSignal, 3, 18, 8)).norm() > 0.0);
  CHECK((a - noise.gaussians(NoiseTag::EnsembleObs, 3, 17, 8)).norm() > 0.0);
  CHECK((a - NoiseStream(43).gaussians(NoiseTag::EnsembleSignal, 3, 17, 8)).norm() > 0.0);
}

TEST_CASE("matrix fill matches per-member draws bit-exactly") {
  const NoiseStream noise(7);
  Eigen::MatrixXd block(5, 6);
  noise.fill_gaussian_matrix(NoiseTag::TruthSignal, 11, block);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const Eigen::VectorXd col =
        noise.gaussians(NoiseTag::TruthSignal, static_cast<std::uint64_t>(i), 11, 5);
    CHECK((block.col(i) - col).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gaussian draws have standard moments") {
  const NoiseStream noise(123);
  const Eigen::VectorXd sample = noise.gaussians(NoiseTag::Generic, 0, 0, 1000000);
  const double mean = sample.mean();
  const double var = (sample.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("uniform01 stays in range and is keyed") {
  const NoiseStream noise(5);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const double u = noise.uniform01(NoiseTag::ParticleResample, 0, k);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(noise.uniform01(NoiseTag::ParticleResample, 0, 0) !=
        noise.uniform01(NoiseTag::ParticleResample, 0, 1));
}

TEST_CASE("forked streams differ from the parent") {
  const NoiseStream noise(99);
  const NoiseStream forked = noise.fork(1);
  CHECK((noise.gaussians(NoiseTag::Generic, 0, 0, 4) - forked.gaussians(NoiseTag::Generic, 0, 0, 4))
            .norm() > 0.0);
}

TEST_CASE("time grid spans and validates") {
  const TimeGrid grid = TimeGrid::span(0.0, 1.0, 0.1);
  CHECK(grid.steps == 10);
  CHECK(grid.t_end() == doctest::Approx(1.0));
  CHECK(grid.index_at(0.55) == 6);  // nearest
  CHECK(grid.index_at(-3.0) == 0);
  CHECK(grid.index_at(99.0) == 10);
  CHECK_THROWS_AS(TimeGrid::span(0.0, 1.0, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid(0.0, -0.1, 5), std::invalid_argument);
}

TEST_CASE("zero drift and zero noise keep the state constant") {
  const SdeModel model = scalar_model(0.0, 0.0);
  const TimeGrid grid(0.0, 0.1, 50);
  const TruthPaths paths = integrate_truth(model, grid, scalar(3.5), scalar(0.0), NoiseStream(1));
  CHECK(paths.state.values(0, 50) == 3.5);
  CHECK((paths.state.values.array() == 3.5).all());
}

TEST_CASE("one explicit Euler step of dx = -x dt") {
  const SdeModel model = scalar_model(-1.0, 0.0);
  const TimeGrid grid(0.0, 0.1, 1);
  const TruthPaths paths = integrate_truth(model, grid, scalar(1.0), scalar(0.0), NoiseStream(1));
  CHECK(paths.state.values(0, 1) == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("same seed reproduces the trajectory bit-exactly") {
  const SdeModel model = scalar_model(-1.0, 1.0);
  const TimeGrid grid(0.0, 0.05, 200);
  const TruthPaths a = integrate_truth(model, grid, scalar(1.0), scalar(0.0), NoiseStream(2024));
  const TruthPaths b = integrate_truth(model, grid, scalar(1.0), scalar(0.0), NoiseStream(2024));
  CHECK((a.state.values - b.state.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.obs.values - b.obs.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noiseless integrator converges to exp(-t) at first order") {
  const SdeModel model = scalar_model(-1.0, 0.0);
  const double exact = std::exp(-1.0);
  double errors[2];
  const double taus[2] = {0.01, 0.005};
  for (int i = 0; i < 2; ++i) {
    const TimeGrid grid = TimeGrid::span(0.0, 1.0, taus[i]);
    const TruthPaths paths =
        integrate_truth(model, grid, scalar(1.0), scalar(0.0), NoiseStream(1));
    errors[i] = std::abs(paths.state.values(0, static_cast<Eigen::Index>(grid.steps)) - exact);
  }
  CHECK(errors[0] < 0.01);
  // Halving the step roughly halves the error.
  CHECK(errors[1] < 0.75 * errors[0]);
  CHECK(errors[1] > 0.25 * errors[0]);
}

TEST_CASE("weak consistency: Var x(1) for dx = sqrt(2) dB") {
  const SdeModel model = scalar_model(0.0, 2.0);
  const TimeGrid grid = TimeGrid::span(0.0, 1.0, 0.01);
  const int runs = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < runs; ++s) {
    const TruthPaths paths =
        integrate_truth(model, grid, scalar(0.0), scalar(0.0), NoiseStream(1000 + s));
    const double x1 = paths.state.values(0, static_cast<Eigen::Index>(grid.steps));
    sum += x1;
    sum_sq += x1 * x1;
  }
  const double mean = sum / runs;
  const double var = sum_sq / runs - mean * mean;
  CHECK(std::abs(var - 2.0) < 0.1);
}

TEST_CASE("blow-up reports the offending step") {
  // dx = x^2 dt from x0 = 10 with tau = 0.1 runs away in a handful of steps.
  BatchDrift f = [](const Eigen::Ref<const Eigen::MatrixXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>&, double,
                    Eigen::Ref<Eigen::MatrixXd> out) { out = x.cwiseProduct(x); };
  BatchDrift h = [](const Eigen::Ref<const Eigen::MatrixXd>&,
                    const Eigen::Ref<const Eigen::VectorXd>&, double,
                    Eigen::Ref<Eigen::MatrixXd> out) { out.setZero(); };
  const SdeModel model = make_model(1, 1, std::move(f), std::move(h),
                                    Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1));
  const TimeGrid grid(0.0, 0.1, 100);
  CHECK_THROWS_AS(integrate_truth(model, grid, scalar(10.0), scalar(0.0), NoiseStream(1)),
                  DivergenceError);
  try {
    integrate_truth(model, grid, scalar(10.0), scalar(0.0), NoiseStream(1));
  } catch (const DivergenceError& e) {
    CHECK(e.step() > 0);
    CHECK(e.step() < 100);
  }
}

TEST_CASE("model validation rejects inconsistent square roots") {
  SdeModel model = scalar_model(-1.0, 1.0);
  model.sigma_sqrt(0, 0) = 2.0;  // S S^T = 4 != 1
  CHECK_THROWS_AS(model.validate(), std::invalid_argument);
}

TEST_CASE("spd_sqrt factors dense SPD matrices") {
  Eigen::MatrixXd a(2, 2);
  a << 4.0, 1.0, 1.0, 3.0;
  const Eigen::MatrixXd root = spd_sqrt(a);
  CHECK((root * root.transpose() - a).norm() < 1e-12);
}
