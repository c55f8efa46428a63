#include <doctest.h>

#include "enkbs/models.hpp"
#include "enkbs/noise.hpp"

using namespace enkbs;

TEST_CASE("lorenz96 drift at rest equals the forcing") {
  const Lorenz96Config cfg;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(40, 1), rate(40, 1);
  lorenz96_drift(x, cfg, rate);
  CHECK((rate.array() == 8.0).all());
}

TEST_CASE("lorenz96 drift with a single excited site") {
  const Lorenz96Config cfg;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(40, 1), rate(40, 1);
  x(0, 0) = 1.0;  // first lattice site
  lorenz96_drift(x, cfg, rate);
  CHECK(rate(0, 0) == doctest::Approx(7.0));
  for (Eigen::Index j = 1; j < 40; ++j) CHECK(rate(j, 0) == doctest::Approx(8.0));
}

TEST_CASE("lorenz96 advection conserves energy") {
  Lorenz96Config cfg;
  cfg.forcing = 0.0;
  const NoiseStream noise(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd x = noise.gaussians(NoiseTag::Generic, 0, trial, 40) * 2.0;
    Eigen::MatrixXd rate(40, 1);
    lorenz96_drift(x, cfg, rate);
    // Undo the damping term to isolate the quadratic advection.
    const double advection_energy = (x.array() * (rate + x).array()).sum();
    CHECK(std::abs(advection_energy) < 1e-10 * x.squaredNorm());
  }
}

TEST_CASE("lorenz96 split assigns noise by observability") {
  const Lorenz96Config cfg;
  const PartitionedModel pm = make_lorenz96_model(cfg);
  CHECK(pm.sde.state_dim == 20);
  CHECK(pm.sde.obs_dim == 20);
  CHECK(pm.hidden_idx.front() == 0);    // first ring site is hidden
  CHECK(pm.observed_idx.front() == 1);  // second ring site is observed
  CHECK(pm.sde.sigma(0, 0) == doctest::Approx(5.0));
  CHECK(pm.sde.gamma(0, 0) == doctest::Approx(0.1));

  // Split drifts agree with the full drift.
  const NoiseStream noise(3);
  const Eigen::VectorXd full = noise.gaussians(NoiseTag::Generic, 0, 0, 40);
  Eigen::MatrixXd full_rate(40, 1);
  lorenz96_drift(full, cfg, full_rate);

  Eigen::VectorXd hidden(20), observed(20);
  for (int a = 0; a < 20; ++a) {
    hidden[a] = full[pm.hidden_idx[a]];
    observed[a] = full[pm.observed_idx[a]];
  }
  Eigen::MatrixXd f_rate(20, 1), h_rate(20, 1);
  pm.sde.signal_drift(hidden, observed, 0.0, f_rate);
  pm.sde.obs_drift(hidden, observed, 0.0, h_rate);
  for (int a = 0; a < 20; ++a) {
    CHECK(f_rate(a, 0) == doctest::Approx(full_rate(pm.hidden_idx[a], 0)));
    CHECK(h_rate(a, 0) == doctest::Approx(full_rate(pm.observed_idx[a], 0)));
  }
}

TEST_CASE("dyad drift values") {
  const DyadConfig cfg;
  const Eigen::Vector2d at_origin = dyad_drift(0.0, 0.0, cfg);
  CHECK(at_origin[0] == doctest::Approx(1.0));
  CHECK(at_origin[1] == doctest::Approx(0.8));

  // At the anti-damping threshold v = d_u/c the growth coefficient vanishes.
  const Eigen::Vector2d at_threshold = dyad_drift(1.0, cfg.d_u / cfg.coupling, cfg);
  CHECK(at_threshold[0] == doctest::Approx(1.0));
  CHECK(at_threshold[1] == doctest::Approx(-1.325));
}

TEST_CASE("dyad coupling is odd in u") {
  const DyadConfig cfg;
  const NoiseStream noise(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd uv = noise.gaussians(NoiseTag::Generic, 1, trial, 2);
    const double rate_pos = dyad_drift(uv[0], uv[1], cfg)[0] - cfg.f_u;
    const double rate_neg = dyad_drift(-uv[0], uv[1], cfg)[0] - cfg.f_u;
    CHECK(rate_neg == doctest::Approx(-rate_pos).epsilon(1e-12));
  }
}

TEST_CASE("dyad observation split swaps roles") {
  const DyadConfig cfg;
  const PartitionedModel hidden_v = make_dyad_model(cfg, DyadDirection::HiddenV);
  const PartitionedModel hidden_u = make_dyad_model(cfg, DyadDirection::HiddenU);

  const double u = 0.7, v = -0.3;
  const Eigen::Vector2d reference = dyad_drift(u, v, cfg);

  Eigen::MatrixXd out(1, 1);
  hidden_v.sde.signal_drift(Eigen::MatrixXd::Constant(1, 1, v),
                            Eigen::VectorXd::Constant(1, u), 0.0, out);
  CHECK(out(0, 0) == doctest::Approx(reference[1]));
  hidden_v.sde.obs_drift(Eigen::MatrixXd::Constant(1, 1, v), Eigen::VectorXd::Constant(1, u), 0.0,
                         out);
  CHECK(out(0, 0) == doctest::Approx(reference[0]));

  hidden_u.sde.signal_drift(Eigen::MatrixXd::Constant(1, 1, u), Eigen::VectorXd::Constant(1, v),
                            0.0, out);
  CHECK(out(0, 0) == doctest::Approx(reference[0]));
  hidden_u.sde.obs_drift(Eigen::MatrixXd::Constant(1, 1, u), Eigen::VectorXd::Constant(1, v), 0.0,
                         out);
  CHECK(out(0, 0) == doctest::Approx(reference[1]));

  CHECK(hidden_v.sde.sigma(0, 0) == doctest::Approx(1.0));   // sigma_v^2
  CHECK(hidden_v.sde.gamma(0, 0) == doctest::Approx(0.25));  // sigma_u^2
  CHECK(hidden_u.sde.sigma(0, 0) == doctest::Approx(0.25));
  CHECK(hidden_u.sde.gamma(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("lorenz84 drift values") {
  const Lorenz84Config cfg;
  const Eigen::Vector3d at_eight = lorenz84_drift(8.0, 0.0, 0.0, cfg);
  CHECK(at_eight[0] == doctest::Approx(0.0));
  CHECK(at_eight[1] == doctest::Approx(1.0));
  CHECK(at_eight[2] == doctest::Approx(0.0));

  const Eigen::Vector3d at_origin = lorenz84_drift(0.0, 0.0, 0.0, cfg);
  CHECK(at_origin[0] == doctest::Approx(2.0));  // a * f
  CHECK(at_origin[1] == doctest::Approx(1.0));  // g
  CHECK(at_origin[2] == doctest::Approx(0.0));
}

TEST_CASE("lorenz84 quadratic terms cancel in the energy budget") {
  const Lorenz84Config cfg;
  const NoiseStream noise(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd s = noise.gaussians(NoiseTag::Generic, 0, trial, 3) * 2.0;
    const double x = s[0], y = s[1], z = s[2];
    const double advective = x * (-(y * y + z * z)) + y * (x * y) + z * (x * z);
    const double rotational = y * (-cfg.b * x * z) + z * (cfg.b * x * y);
    CHECK(std::abs(advective) < 1e-10 * (1.0 + s.squaredNorm()));
    CHECK(std::abs(rotational) < 1e-10 * (1.0 + s.squaredNorm()));
  }
}

TEST_CASE("lorenz84 split observes (y, z)") {
  const Lorenz84Config cfg;
  const PartitionedModel pm = make_lorenz84_model(cfg);
  CHECK(pm.sde.state_dim == 1);
  CHECK(pm.sde.obs_dim == 2);

  const double x = 0.9, y = -1.1, z = 0.4;
  const Eigen::Vector3d reference = lorenz84_drift(x, y, z, cfg);
  Eigen::MatrixXd fx(1, 1), hyz(2, 1);
  Eigen::VectorXd yz(2);
  yz << y, z;
  pm.sde.signal_drift(Eigen::MatrixXd::Constant(1, 1, x), yz, 0.0, fx);
  pm.sde.obs_drift(Eigen::MatrixXd::Constant(1, 1, x), yz, 0.0, hyz);
  CHECK(fx(0, 0) == doctest::Approx(reference[0]));
  CHECK(hyz(0, 0) == doctest::Approx(reference[1]));
  CHECK(hyz(1, 0) == doctest::Approx(reference[2]));
}
