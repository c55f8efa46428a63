#include "enkbs/experiments.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "enkbs/csv.hpp"
#include "enkbs/localization.hpp"

namespace enkbs {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Trajectory slice_trajectory(const Trajectory& full, std::size_t k_lo, std::size_t steps) {
  Trajectory out;
  out.grid = TimeGrid(0.0, full.grid.dt, steps);
  out.values = full.values.middleCols(static_cast<Eigen::Index>(k_lo),
                                      static_cast<Eigen::Index>(steps) + 1);
  return out;
}

}  // namespace

TruthPaths make_lorenz96_truth(const Lorenz96Config& cfg, double tau, double t_end,
                               double spin_up, std::uint64_t seed) {
  // Deterministic spin-up from the rest state with one perturbed site puts
  // the reference on the attractor.
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(cfg.n, 1, cfg.forcing);
  x(cfg.n / 2, 0) += 0.01;
  Eigen::MatrixXd rate(cfg.n, 1);
  const auto spin_steps = static_cast<std::size_t>(std::llround(spin_up / tau));
  for (std::size_t k = 0; k < spin_steps; ++k) {
    lorenz96_drift(x, cfg, rate);
    x += tau * rate;
  }

  const PartitionedModel pm = make_lorenz96_model(cfg);
  Eigen::VectorXd x0(pm.hidden_idx.size()), y0(pm.observed_idx.size());
  for (std::size_t a = 0; a < pm.hidden_idx.size(); ++a)
    x0[static_cast<Eigen::Index>(a)] = x(pm.hidden_idx[a], 0);
  for (std::size_t a = 0; a < pm.observed_idx.size(); ++a)
    y0[static_cast<Eigen::Index>(a)] = x(pm.observed_idx[a], 0);

  const TimeGrid grid = TimeGrid::span(0.0, t_end, tau);
  return integrate_truth(pm.sde, grid, x0, y0, NoiseStream(seed));
}

DyadTruth make_dyad_truth(const DyadConfig& cfg, double tau, double t_end, double spin_up,
                          std::uint64_t seed, bool require_sign_constant_u) {
  const PartitionedModel pm = make_dyad_model(cfg, DyadDirection::HiddenV);
  const TimeGrid full_grid = TimeGrid::span(0.0, spin_up + t_end, tau);
  const auto k_lo = static_cast<std::size_t>(std::llround(spin_up / tau));
  const auto steps = full_grid.steps - k_lo;

  const NoiseStream base(seed);
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    const NoiseStream stream = attempt == 0 ? base : base.fork(attempt);
    Eigen::VectorXd v0(1), u0(1);
    v0 << 0.0;
    u0 << 1.0;
    const TruthPaths joint = integrate_truth(pm.sde, full_grid, v0, u0, stream);
    DyadTruth truth;
    truth.v = slice_trajectory(joint.state, k_lo, steps);
    truth.u = slice_trajectory(joint.obs, k_lo, steps);
    if (!require_sign_constant_u || truth.u.values.minCoeff() > 0.0) return truth;
  }
  throw std::runtime_error("make_dyad_truth: no sign-constant window found");
}

const Trajectory& dyad_hidden_truth(const DyadTruth& truth, DyadDirection direction) {
  return direction == DyadDirection::HiddenV ? truth.v : truth.u;
}

const Trajectory& dyad_observed_truth(const DyadTruth& truth, DyadDirection direction) {
  return direction == DyadDirection::HiddenV ? truth.u : truth.v;
}

TruthPaths make_lorenz84_truth(const Lorenz84Config& cfg, double tau, double t_end,
                               double spin_up, std::uint64_t seed) {
  const PartitionedModel pm = make_lorenz84_model(cfg);
  const TimeGrid full_grid = TimeGrid::span(0.0, spin_up + t_end, tau);
  Eigen::VectorXd x0(1), yz0(2);
  x0 << 1.0;
  yz0 << 0.5, 0.5;
  const TruthPaths joint = integrate_truth(pm.sde, full_grid, x0, yz0, NoiseStream(seed));
  const auto k_lo = static_cast<std::size_t>(std::llround(spin_up / tau));
  TruthPaths out;
  out.state = slice_trajectory(joint.state, k_lo, full_grid.steps - k_lo);
  out.obs = slice_trajectory(joint.obs, k_lo, full_grid.steps - k_lo);
  return out;
}

Eigen::MatrixXd perturbed_initial_ensemble(const Eigen::VectorXd& center, double spread,
                                           Eigen::Index m, const NoiseStream& noise) {
  Eigen::MatrixXd members(center.size(), m);
  noise.fill_gaussian_matrix(NoiseTag::EnsembleInit, 0, members);
  members *= spread;
  members.colwise() += center;
  return members;
}

// --------------------------------------------------------------------------

const L96Cell& L96TableResult::cell(double delta2, double r0) const {
  for (const auto& c : cells)
    if (c.delta2 == delta2 && c.r0 == r0) return c;
  throw std::out_of_range("L96TableResult: no such cell");
}

L96TableResult run_l96_table_experiment(const L96TableParams& params) {
  L96TableResult result;
  result.params = params;

  const PartitionedModel pm = make_lorenz96_model(params.model);
  const TruthPaths truth = make_lorenz96_truth(params.model, params.tau, params.t_end,
                                               params.spin_up, params.seed);
  const TimeGrid& grid = truth.state.grid;

  const NoiseStream ens_stream = NoiseStream(params.seed).fork(1);
  const Eigen::MatrixXd init = perturbed_initial_ensemble(
      truth.state.values.col(0), params.init_spread, params.ensemble_size, ens_stream);

  for (const double r0 : params.radii) {
    const LocalizationMatrix loc = build_periodic_localization(params.model.n, r0);
    const Eigen::MatrixXd taper_xh = loc.block(pm.hidden_idx, pm.observed_idx);
    const Eigen::MatrixXd taper_ff = loc.block(pm.hidden_idx, pm.hidden_idx);

    for (const double delta2 : params.delta2) {
      FilterOptions fopts;
      fopts.taper_xh = taper_xh;
      fopts.inflation = std::sqrt(delta2);
      const FilterRun frun = run_filter(pm.sde, grid, truth.obs, init, ens_stream, fopts);

      L96Cell cell;
      cell.delta2 = delta2;
      cell.r0 = r0;
      cell.filter_rmse = frun.ok()
                             ? rmse(frun.moments, truth.state, params.window_lo, params.window_hi)
                             : kNan;

      if (frun.ok()) {
        SmootherOptions sopts;
        sopts.taper_ff = taper_ff;
        sopts.record_members = false;
        const SmootherRun srun = run_smoother(frun, pm.sde, grid, truth.obs, sopts);
        cell.smoother_rmse =
            srun.ok() ? rmse(srun.moments, truth.state, params.window_lo, params.window_hi) : kNan;
      } else {
        cell.smoother_rmse = kNan;
      }
      result.cells.push_back(cell);
    }
  }
  return result;
}

// --------------------------------------------------------------------------

double DyadAciResult::mean_rmse(Eigen::Index m, bool smoother) const {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& point : rmse) {
    if (point.m != m) continue;
    acc += smoother ? point.smoother_rmse : point.filter_rmse;
    ++count;
  }
  if (count == 0) throw std::out_of_range("DyadAciResult: no such ensemble size");
  return acc / static_cast<double>(count);
}

DyadAciResult run_dyad_aci_experiment(const DyadAciParams& params) {
  DyadAciResult result;
  result.params = params;

  // ACI/CIR series on the sign-constant figure window, both directions.
  result.truth_figure = make_dyad_truth(params.model, params.tau, params.t_figure,
                                        params.spin_up, params.seed, true);
  const TimeGrid fig_grid = result.truth_figure.u.grid;

  for (const DyadDirection direction : {DyadDirection::HiddenV, DyadDirection::HiddenU}) {
    const PartitionedModel pm = make_dyad_model(params.model, direction);
    const Trajectory& hidden = dyad_hidden_truth(result.truth_figure, direction);
    const Trajectory& observed = dyad_observed_truth(result.truth_figure, direction);

    for (const Eigen::Index m : params.m_figure) {
      const NoiseStream stream =
          NoiseStream(params.seed).fork(10 + static_cast<std::uint64_t>(m) +
                                        (direction == DyadDirection::HiddenU ? 1000 : 0));
      const Eigen::MatrixXd init = perturbed_initial_ensemble(hidden.values.col(0),
                                                              params.init_spread, m, stream);
      const FilterRun frun = run_filter(pm.sde, fig_grid, observed, init, stream);
      SmootherOptions sopts;
      sopts.record_members = false;
      const SmootherRun srun = run_smoother(frun, pm.sde, fig_grid, observed, sopts);
      if (!frun.ok() || !srun.ok())
        throw DivergenceError("run_dyad_aci_experiment: figure run diverged",
                              frun.diverged_at.value_or(srun.diverged_at.value_or(0)));

      CirOptions cir;
      cir.lags = uniform_lags(params.lag_count, params.max_lag);
      cir.saturation = params.saturation;
      cir.eval_stride = params.eval_stride;

      DyadFigureRun run;
      run.direction = direction;
      run.m = m;
      run.series = compute_aci_cir(frun, srun, pm.sde, fig_grid, observed, cir);
      result.figures.push_back(std::move(run));
    }
  }

  // RMSE versus ensemble size on the long window, v -> u direction.
  result.truth_rmse = make_dyad_truth(params.model, params.tau, params.t_rmse, params.spin_up,
                                      params.seed + 1, false);
  const TimeGrid rmse_grid = result.truth_rmse.u.grid;
  const PartitionedModel pm_v = make_dyad_model(params.model, DyadDirection::HiddenV);

  for (const Eigen::Index m : params.m_rmse) {
    for (std::size_t s = 0; s < params.rmse_seeds; ++s) {
      const NoiseStream stream = NoiseStream(params.seed).fork(
          100000 + 131 * static_cast<std::uint64_t>(m) + s);
      const Eigen::MatrixXd init = perturbed_initial_ensemble(
          result.truth_rmse.v.values.col(0), params.init_spread, m, stream);
      const FilterRun frun = run_filter(pm_v.sde, rmse_grid, result.truth_rmse.u, init, stream);
      SmootherOptions sopts;
      sopts.record_members = false;
      const SmootherRun srun = run_smoother(frun, pm_v.sde, rmse_grid, result.truth_rmse.u, sopts);
      if (!frun.ok() || !srun.ok())
        throw DivergenceError("run_dyad_aci_experiment: rmse run diverged",
                              frun.diverged_at.value_or(srun.diverged_at.value_or(0)));

      DyadRmsePoint point;
      point.m = m;
      point.seed_index = s;
      point.filter_rmse = rmse(frun.moments, result.truth_rmse.v, 0.0, params.t_rmse);
      point.smoother_rmse = rmse(srun.moments, result.truth_rmse.v, 0.0, params.t_rmse);
      result.rmse.push_back(point);
    }
  }

  // Conditional-Gaussian reference on the same data.
  Eigen::VectorXd prior_mean = result.truth_rmse.v.values.col(0);
  Eigen::MatrixXd prior_cov =
      Eigen::MatrixXd::Constant(1, 1, params.init_spread * params.init_spread);
  const OracleMoments oracle =
      cgns_dyad_moments(params.model, result.truth_rmse.u, prior_mean, prior_cov);
  result.oracle_filter_rmse = rmse(oracle.filter, result.truth_rmse.v, 0.0, params.t_rmse);
  result.oracle_smoother_rmse = rmse(oracle.smoother, result.truth_rmse.v, 0.0, params.t_rmse);
  return result;
}

// --------------------------------------------------------------------------

PolynomialModel lorenz84_truth_model(const Lorenz84Config& cfg, const CandidateLibrary& lib) {
  auto idx = [&](const char* name) {
    for (Eigen::Index j = 0; j < lib.size(); ++j)
      if (lib.names[static_cast<std::size_t>(j)] == name) return j;
    throw std::invalid_argument("lorenz84_truth_model: missing feature");
  };
  PolynomialModel model;
  model.theta = Eigen::MatrixXd::Zero(3, lib.size());
  model.theta(0, idx("1")) = cfg.a * cfg.f;
  model.theta(0, idx("x")) = -cfg.a;
  model.theta(0, idx("y2")) = -1.0;
  model.theta(0, idx("z2")) = -1.0;
  model.theta(1, idx("1")) = cfg.g;
  model.theta(1, idx("y")) = -1.0;
  model.theta(1, idx("xy")) = 1.0;
  model.theta(1, idx("xz")) = -cfg.b;
  model.theta(2, idx("z")) = -1.0;
  model.theta(2, idx("xy")) = cfg.b;
  model.theta(2, idx("xz")) = 1.0;
  model.sigma = Eigen::Vector3d(cfg.sigma_x, cfg.sigma_y, cfg.sigma_z);
  return model;
}

PolynomialModel lorenz84_initial_guess(const CandidateLibrary& lib, const Lorenz84Config& cfg) {
  auto idx = [&](const char* name) {
    for (Eigen::Index j = 0; j < lib.size(); ++j)
      if (lib.names[static_cast<std::size_t>(j)] == name) return j;
    throw std::invalid_argument("lorenz84_initial_guess: missing feature");
  };
  PolynomialModel model;
  model.theta = Eigen::MatrixXd::Zero(3, lib.size());
  // x-equation guess: y^2 - z^2 + 2 + (y^2 - z^2) x
  model.theta(0, idx("y2")) = 1.0;
  model.theta(0, idx("z2")) = -1.0;
  model.theta(0, idx("1")) = 2.0;
  model.theta(0, idx("xy2")) = 1.0;
  model.theta(0, idx("xz2")) = -1.0;
  // y-equation guess: -y - 2 y^2 + z^2 + 1 + (-y - 8 z - y z) x
  model.theta(1, idx("y")) = -1.0;
  model.theta(1, idx("y2")) = -2.0;
  model.theta(1, idx("z2")) = 1.0;
  model.theta(1, idx("1")) = 1.0;
  model.theta(1, idx("xy")) = -1.0;
  model.theta(1, idx("xz")) = -8.0;
  model.theta(1, idx("xyz")) = -1.0;
  // z-equation guess: -z + z^2 - y z + (8 y + z + z^2) x
  model.theta(2, idx("z")) = -1.0;
  model.theta(2, idx("z2")) = 1.0;
  model.theta(2, idx("yz")) = -1.0;
  model.theta(2, idx("xy")) = 8.0;
  model.theta(2, idx("xz")) = 1.0;
  model.theta(2, idx("xz2")) = 1.0;
  model.sigma = Eigen::Vector3d(cfg.sigma_x, 1.0, 1.0);
  return model;
}

L84DiscoverResult run_l84_discover_experiment(const L84DiscoverParams& params) {
  L84DiscoverResult result;
  result.params = params;

  const CandidateLibrary lib = lorenz84_library();
  result.truth_model = lorenz84_truth_model(params.model, lib);
  result.truth_support = (result.truth_model.theta.array() != 0.0).cast<int>();
  result.truth_support.col(lib.constant_index).setOnes();

  result.truth = make_lorenz84_truth(params.model, params.tau, params.t_end, params.spin_up,
                                     params.seed);
  result.grid = result.truth.obs.grid;

  const PolynomialModel initial = lorenz84_initial_guess(lib, params.model);
  EstimateOptions est;
  est.fixed_sigma = Eigen::Vector3d(params.model.sigma_x, kNan, kNan);

  LearnOptions lopts;
  lopts.iterations = params.iterations;
  lopts.ensemble_size = params.ensemble_size;
  lopts.ce_threshold = params.ce_threshold;
  lopts.ce_rate_stride = params.ce_rate_stride;
  lopts.sample_mean = params.sample_mean;
  lopts.init_spread = params.init_spread;

  result.state = learn(result.truth.obs.values, result.grid, lib, initial, {0}, {1, 2},
                       lorenz84_energy_constraints(lib), est, NoiseStream(params.seed).fork(7),
                       lopts);
  return result;
}

// --------------------------------------------------------------------------

namespace {

SdeModel scalar_ou_model() {
  BatchDrift f = [](const Eigen::Ref<const Eigen::MatrixXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>&, double,
                    Eigen::Ref<Eigen::MatrixXd> out) { out = -x; };
  BatchDrift h = [](const Eigen::Ref<const Eigen::MatrixXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>&, double,
                    Eigen::Ref<Eigen::MatrixXd> out) { out = x; };
  return make_model(1, 1, std::move(f), std::move(h), Eigen::MatrixXd::Identity(1, 1),
                    Eigen::MatrixXd::Identity(1, 1));
}

double window_mean_var(const MomentSeries& moments, double t_lo, double t_hi) {
  const std::size_t k_lo = moments.grid.index_at(t_lo);
  const std::size_t k_hi = moments.grid.index_at(t_hi);
  double acc = 0.0;
  for (std::size_t k = k_lo; k <= k_hi; ++k) acc += moments.covs[k](0, 0);
  return acc / static_cast<double>(k_hi - k_lo + 1);
}

}  // namespace

LinearConsistencyResult run_linear_consistency_experiment(const LinearConsistencyParams& params) {
  LinearConsistencyResult result;
  result.params = params;
  result.filter_stationary = std::sqrt(2.0) - 1.0;
  result.smoother_stationary = 1.0 / (2.0 * std::sqrt(2.0));

  const SdeModel model = scalar_ou_model();
  const TimeGrid grid = TimeGrid::span(0.0, params.t_end, params.tau);
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  const TruthPaths truth = integrate_truth(model, grid, x0, x0, NoiseStream(params.seed));

  std::vector<Eigen::Index> all_m = params.m_list;
  all_m.push_back(params.m_reference);
  for (const Eigen::Index m : all_m) {
    double f_err = 0.0, s_err = 0.0;
    for (std::size_t s = 0; s < params.seeds_per_m; ++s) {
      const NoiseStream stream =
          NoiseStream(params.seed).fork(371 * static_cast<std::uint64_t>(m) + s);
      const Eigen::MatrixXd init =
          perturbed_initial_ensemble(Eigen::VectorXd::Zero(1), 1.0, m, stream);
      const FilterRun frun = run_filter(model, grid, truth.obs, init, stream);
      SmootherOptions sopts;
      sopts.record_members = false;
      const SmootherRun srun = run_smoother(frun, model, grid, truth.obs, sopts);
      if (!frun.ok() || !srun.ok())
        throw DivergenceError("run_linear_consistency_experiment: run diverged",
                              frun.diverged_at.value_or(srun.diverged_at.value_or(0)));
      f_err += std::abs(window_mean_var(frun.moments, params.window_lo, params.window_hi) -
                        result.filter_stationary) /
               result.filter_stationary;
      s_err += std::abs(window_mean_var(srun.moments, params.window_lo, params.window_hi) -
                        result.smoother_stationary) /
               result.smoother_stationary;
    }
    LinearMomentError err;
    err.m = m;
    err.filter_var_rel_err = f_err / static_cast<double>(params.seeds_per_m);
    err.smoother_var_rel_err = s_err / static_cast<double>(params.seeds_per_m);
    result.moment_errors.push_back(err);
  }

  // Filter-smoother cross-covariance deviation, stochastic vs deterministic.
  const std::size_t k_lo = grid.index_at(params.window_lo);
  const std::size_t k_hi = grid.index_at(params.window_hi);
  for (std::size_t s = 0; s < params.cross_seeds; ++s) {
    const NoiseStream stream = NoiseStream(params.seed).fork(900000 + s);
    const Eigen::MatrixXd init =
        perturbed_initial_ensemble(Eigen::VectorXd::Zero(1), 1.0, params.m_reference, stream);

    CrossCovSeed entry;
    entry.seed_index = s;
    for (const bool deterministic : {false, true}) {
      FilterOptions fopts;
      fopts.deterministic = deterministic;
      const FilterRun frun = run_filter(model, grid, truth.obs, init, stream, fopts);
      const SmootherRun srun = run_smoother(frun, model, grid, truth.obs);
      if (!frun.ok() || !srun.ok())
        throw DivergenceError("run_linear_consistency_experiment: cross run diverged",
                              frun.diverged_at.value_or(srun.diverged_at.value_or(0)));

      double acc = 0.0;
      for (std::size_t k = k_lo; k <= k_hi; ++k) {
        const double pfs = cross_cov(frun.members[k], srun.members[k])(0, 0);
        const double pf = frun.moments.covs[k](0, 0);
        acc += pfs - pf;
        if (s == 0) {
          if (!deterministic && result.times.size() < k_hi - k_lo + 1) {
            result.times.push_back(grid.time(k));
            result.pfs_stochastic.push_back(pfs);
            result.pf_empirical.push_back(pf);
          } else if (deterministic) {
            result.pfs_deterministic.push_back(pfs);
          }
        }
      }
      const double dev = acc / static_cast<double>(k_hi - k_lo + 1);
      if (deterministic)
        entry.deviation_deterministic = dev;
      else
        entry.deviation_stochastic = dev;
    }
    result.cross.push_back(entry);
  }
  return result;
}

// --------------------------------------------------------------------------
// Config plumbing

L96TableParams l96_params_from_config(const Config& cfg) {
  L96TableParams p;
  p.model.n = static_cast<Eigen::Index>(cfg.get_size("n", p.model.n));
  p.model.forcing = cfg.get_double("forcing", p.model.forcing);
  p.model.obs_noise_var = cfg.get_double("obs_noise_var", p.model.obs_noise_var);
  p.model.hidden_noise_var = cfg.get_double("hidden_noise_var", p.model.hidden_noise_var);
  p.tau = cfg.get_double("tau", p.tau);
  p.t_end = cfg.get_double("t_end", p.t_end);
  p.spin_up = cfg.get_double("spin_up", p.spin_up);
  p.window_lo = cfg.get_double("window_lo", p.window_lo);
  p.window_hi = cfg.get_double("window_hi", p.window_hi);
  p.ensemble_size = static_cast<Eigen::Index>(cfg.get_size("m", p.ensemble_size));
  p.delta2 = cfg.get_list("delta2_list", p.delta2);
  p.radii = cfg.get_list("r0_list", p.radii);
  p.seed = cfg.get_u64("seed", p.seed);
  p.init_spread = cfg.get_double("init_spread", p.init_spread);
  return p;
}

DyadAciParams dyad_params_from_config(const Config& cfg) {
  DyadAciParams p;
  p.model.d_u = cfg.get_double("d_u", p.model.d_u);
  p.model.f_u = cfg.get_double("f_u", p.model.f_u);
  p.model.sigma_u = cfg.get_double("sigma_u", p.model.sigma_u);
  p.model.coupling = cfg.get_double("coupling", p.model.coupling);
  p.model.d_v = cfg.get_double("d_v", p.model.d_v);
  p.model.f_v = cfg.get_double("f_v", p.model.f_v);
  p.model.sigma_v = cfg.get_double("sigma_v", p.model.sigma_v);
  p.tau = cfg.get_double("tau", p.tau);
  p.t_figure = cfg.get_double("t_figure", p.t_figure);
  p.t_rmse = cfg.get_double("t_rmse", p.t_rmse);
  p.spin_up = cfg.get_double("spin_up", p.spin_up);
  auto to_index = [](const std::vector<double>& v) {
    std::vector<Eigen::Index> out;
    for (const double x : v) out.push_back(static_cast<Eigen::Index>(std::llround(x)));
    return out;
  };
  p.m_figure = to_index(cfg.get_list("m_figure", {10, 50}));
  p.m_rmse = to_index(cfg.get_list("m_rmse", {5, 10, 20, 50, 100, 200}));
  p.rmse_seeds = cfg.get_size("rmse_seeds", p.rmse_seeds);
  p.lag_count = cfg.get_size("lag_count", p.lag_count);
  p.max_lag = cfg.get_double("max_lag", p.max_lag);
  p.saturation = cfg.get_double("saturation", p.saturation);
  p.eval_stride = cfg.get_size("eval_stride", p.eval_stride);
  p.seed = cfg.get_u64("seed", p.seed);
  p.init_spread = cfg.get_double("init_spread", p.init_spread);
  return p;
}

L84DiscoverParams l84_params_from_config(const Config& cfg) {
  L84DiscoverParams p;
  p.model.a = cfg.get_double("a", p.model.a);
  p.model.b = cfg.get_double("b", p.model.b);
  p.model.f = cfg.get_double("f", p.model.f);
  p.model.g = cfg.get_double("g", p.model.g);
  p.model.sigma_x = cfg.get_double("sigma_x", p.model.sigma_x);
  p.model.sigma_y = cfg.get_double("sigma_y", p.model.sigma_y);
  p.model.sigma_z = cfg.get_double("sigma_z", p.model.sigma_z);
  p.tau = cfg.get_double("tau", p.tau);
  p.t_end = cfg.get_double("t_end", p.t_end);
  p.spin_up = cfg.get_double("spin_up", p.spin_up);
  p.iterations = cfg.get_size("iterations", p.iterations);
  p.ensemble_size = static_cast<Eigen::Index>(cfg.get_size("m", p.ensemble_size));
  p.ce_threshold = cfg.get_double("ce_threshold", p.ce_threshold);
  p.ce_rate_stride = static_cast<Eigen::Index>(cfg.get_size("ce_rate_stride", 10));
  p.sample_mean = cfg.get_bool("sample_mean", p.sample_mean);
  p.seed = cfg.get_u64("seed", p.seed);
  p.init_spread = cfg.get_double("init_spread", p.init_spread);
  return p;
}

LinearConsistencyParams linear_params_from_config(const Config& cfg) {
  LinearConsistencyParams p;
  p.tau = cfg.get_double("tau", p.tau);
  p.t_end = cfg.get_double("t_end", p.t_end);
  p.window_lo = cfg.get_double("window_lo", p.window_lo);
  p.window_hi = cfg.get_double("window_hi", p.window_hi);
  p.m_reference = static_cast<Eigen::Index>(cfg.get_size("m", p.m_reference));
  auto to_index = [](const std::vector<double>& v) {
    std::vector<Eigen::Index> out;
    for (const double x : v) out.push_back(static_cast<Eigen::Index>(std::llround(x)));
    return out;
  };
  p.m_list = to_index(cfg.get_list("m_list", {10, 50, 200, 1000}));
  p.seeds_per_m = cfg.get_size("seeds_per_m", p.seeds_per_m);
  p.cross_seeds = cfg.get_size("cross_seeds", p.cross_seeds);
  p.seed = cfg.get_u64("seed", p.seed);
  return p;
}

// --------------------------------------------------------------------------
// CSV emission

namespace {

std::string meta_line(const Config& cfg, const std::string& experiment) {
  return "experiment=" + experiment + " config=" + cfg.hash() +
         " seed=" + std::to_string(cfg.get_u64("seed", 1));
}

void write_l96_csvs(const L96TableResult& result, const Config& cfg,
                    const std::filesystem::path& out_dir) {
  const std::string meta = meta_line(cfg, "l96-table");
  CsvWriter filter_csv(out_dir / "l96_filter_rmse.csv", meta, {"delta2", "r0", "rmse"});
  CsvWriter smoother_csv(out_dir / "l96_smoother_rmse.csv", meta, {"delta2", "r0", "rmse"});
  for (const auto& cell : result.cells) {
    filter_csv.row({cell.delta2, cell.r0, cell.filter_rmse});
    smoother_csv.row({cell.delta2, cell.r0, cell.smoother_rmse});
  }
}

void write_dyad_csvs(const DyadAciResult& result, const Config& cfg,
                     const std::filesystem::path& out_dir) {
  const std::string meta = meta_line(cfg, "dyad-aci");
  for (const auto& figure : result.figures) {
    const std::string direction =
        figure.direction == DyadDirection::HiddenV ? "v_to_u" : "u_to_v";
    CsvWriter csv(out_dir / ("dyad_aci_" + direction + "_m" + std::to_string(figure.m) + ".csv"),
                  meta, {"t", "aci_metric", "cir"});
    for (std::size_t e = 0; e < figure.series.times.size(); ++e)
      csv.row({figure.series.times[e], figure.series.metric[e], figure.series.cir[e]});
  }

  CsvWriter rmse_csv(out_dir / "dyad_rmse_vs_m.csv", meta,
                     {"m", "seed_index", "filter_rmse", "smoother_rmse", "oracle_filter_rmse",
                      "oracle_smoother_rmse"});
  for (const auto& point : result.rmse)
    rmse_csv.row({static_cast<double>(point.m), static_cast<double>(point.seed_index),
                  point.filter_rmse, point.smoother_rmse, result.oracle_filter_rmse,
                  result.oracle_smoother_rmse});

  write_trajectory_csv(out_dir / "dyad_truth_u.csv", meta, result.truth_figure.u);
  write_trajectory_csv(out_dir / "dyad_truth_v.csv", meta, result.truth_figure.v);
}

void write_l84_csvs(const L84DiscoverResult& result, const Config& cfg,
                    const std::filesystem::path& out_dir) {
  const std::string meta = meta_line(cfg, "l84-discover");
  const CandidateLibrary lib = lorenz84_library();
  const char* eqs[3] = {"x", "y", "z"};

  std::vector<std::string> cols{"iteration", "structure_error", "sigma_y", "sigma_z"};
  for (int i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < lib.size(); ++j)
      cols.push_back("theta_" + std::string(eqs[i]) + "_" + lib.names[static_cast<std::size_t>(j)]);
  CsvWriter iter_csv(out_dir / "l84_iterations.csv", meta, cols);
  for (std::size_t it = 0; it < result.state.iterations.size(); ++it) {
    const auto& rec = result.state.iterations[it];
    std::vector<double> row{static_cast<double>(it), rec.structure_error,
                            rec.diverged ? kNan : rec.model.sigma[1],
                            rec.diverged ? kNan : rec.model.sigma[2]};
    for (int i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < lib.size(); ++j)
        row.push_back(rec.diverged ? kNan : rec.model.theta(i, j));
    iter_csv.row(row);
  }

  CsvWriter final_csv(out_dir / "l84_final_model.csv", meta,
                      {"equation", "feature", "theta_true", "theta_identified"});
  const auto& final_model = result.state.final_model();
  for (int i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < lib.size(); ++j)
      final_csv.raw_row(std::string(eqs[i]) + "," + lib.names[static_cast<std::size_t>(j)] + "," +
                        format_double(result.truth_model.theta(i, j)) + "," +
                        format_double(final_model.theta(i, j)));

  // Sampled hidden trajectory from the last iteration against the truth.
  CsvWriter sample_csv(out_dir / "l84_sampled_hidden.csv", meta, {"t", "x_truth", "x_sampled"});
  for (std::size_t k = 0; k <= result.grid.steps; ++k)
    sample_csv.row({result.grid.time(k),
                    result.truth.state.values(0, static_cast<Eigen::Index>(k)),
                    result.state.last_sample.size()
                        ? result.state.last_sample(0, static_cast<Eigen::Index>(k))
                        : kNan});
}

void write_linear_csvs(const LinearConsistencyResult& result, const Config& cfg,
                       const std::filesystem::path& out_dir) {
  const std::string meta = meta_line(cfg, "linear-consistency");
  CsvWriter err_csv(out_dir / "linear_moment_errors.csv", meta,
                    {"m", "filter_var_rel_err", "smoother_var_rel_err"});
  for (const auto& err : result.moment_errors)
    err_csv.row({static_cast<double>(err.m), err.filter_var_rel_err, err.smoother_var_rel_err});

  CsvWriter cross_csv(out_dir / "linear_cross_covariance.csv", meta,
                      {"seed_index", "deviation_stochastic", "deviation_deterministic"});
  for (const auto& entry : result.cross)
    cross_csv.row({static_cast<double>(entry.seed_index), entry.deviation_stochastic,
                   entry.deviation_deterministic});

  CsvWriter series_csv(out_dir / "linear_cross_covariance_series.csv", meta,
                       {"t", "pfs_stochastic", "pfs_deterministic", "pf_empirical"});
  for (std::size_t i = 0; i < result.times.size(); ++i)
    series_csv.row({result.times[i], result.pfs_stochastic[i], result.pfs_deterministic[i],
                    result.pf_empirical[i]});
}

}  // namespace

namespace {

void reject_unknown_keys(const Config& cfg) {
  const auto unused = cfg.unused_keys();
  if (unused.empty()) return;
  std::string msg = "unknown config keys:";
  for (const auto& key : unused) msg += " " + key;
  throw std::invalid_argument(msg);
}

}  // namespace

int run_experiment(const std::string& name, const Config& cfg,
                   const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  if (name == "l96-table") {
    const auto params = l96_params_from_config(cfg);
    reject_unknown_keys(cfg);
    write_l96_csvs(run_l96_table_experiment(params), cfg, out_dir);
  } else if (name == "dyad-aci") {
    const auto params = dyad_params_from_config(cfg);
    reject_unknown_keys(cfg);
    write_dyad_csvs(run_dyad_aci_experiment(params), cfg, out_dir);
  } else if (name == "l84-discover") {
    const auto params = l84_params_from_config(cfg);
    reject_unknown_keys(cfg);
    const auto result = run_l84_discover_experiment(params);
    if (result.state.aborted)
      throw std::runtime_error("l84-discover aborted: " + result.state.abort_reason);
    write_l84_csvs(result, cfg, out_dir);
  } else if (name == "linear-consistency") {
    const auto params = linear_params_from_config(cfg);
    reject_unknown_keys(cfg);
    write_linear_csvs(run_linear_consistency_experiment(params), cfg, out_dir);
  } else {
    throw std::invalid_argument("unknown experiment '" + name + "'");
  }
  return 0;
}

}  // namespace enkbs
