#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "enkbs/aci.hpp"
#include "enkbs/config.hpp"
#include "enkbs/discovery.hpp"
#include "enkbs/filter.hpp"
#include "enkbs/models.hpp"
#include "enkbs/oracles.hpp"
#include "enkbs/smoother.hpp"

namespace enkbs {

// --------------------------------------------------------------------------
// Truth generation

// Deterministic spin-up from the mildly perturbed rest state, then a
// stochastic reference run; the observation path doubles as the data.
TruthPaths make_lorenz96_truth(const Lorenz96Config& cfg, double tau, double t_end,
                               double spin_up, std::uint64_t seed);

// Joint dyad reference paths (u and v). With require_sign_constant_u the seed
// is re-forked until u stays positive over the window.
struct DyadTruth {
  Trajectory u;
  Trajectory v;
};
DyadTruth make_dyad_truth(const DyadConfig& cfg, double tau, double t_end, double spin_up,
                          std::uint64_t seed, bool require_sign_constant_u);

const Trajectory& dyad_hidden_truth(const DyadTruth& truth, DyadDirection direction);
const Trajectory& dyad_observed_truth(const DyadTruth& truth, DyadDirection direction);

TruthPaths make_lorenz84_truth(const Lorenz84Config& cfg, double tau, double t_end,
                               double spin_up, std::uint64_t seed);

// Members drawn as center + spread * N(0, I).
Eigen::MatrixXd perturbed_initial_ensemble(const Eigen::VectorXd& center, double spread,
                                           Eigen::Index m, const NoiseStream& noise);

// --------------------------------------------------------------------------
// Lorenz-96 RMSE tables over the (delta^2, r0) sweep

struct L96TableParams {
  Lorenz96Config model;
  double tau = 0.005;
  double t_end = 100.0;
  double spin_up = 20.0;
  double window_lo = 20.0;
  double window_hi = 100.0;
  Eigen::Index ensemble_size = 10;
  std::vector<double> delta2 = {1.0, 1.0001, 1.001, 1.005, 1.01, 1.02};
  std::vector<double> radii = {1, 2, 3, 4, 5, 8, 15, 18};
  std::uint64_t seed = 1;
  double init_spread = 0.1;
};

struct L96Cell {
  double delta2 = 1.0;
  double r0 = 0.0;
  double filter_rmse = 0.0;    // NaN marks divergence
  double smoother_rmse = 0.0;  // NaN marks divergence
};

struct L96TableResult {
  L96TableParams params;
  std::vector<L96Cell> cells;
  const L96Cell& cell(double delta2, double r0) const;
};

L96TableResult run_l96_table_experiment(const L96TableParams& params);

// --------------------------------------------------------------------------
// Dyad causal-inference experiment

struct DyadAciParams {
  DyadConfig model;
  double tau = 0.005;
  double t_figure = 30.0;   // sign-constant window for the ACI/CIR series
  double t_rmse = 500.0;    // window for the RMSE-vs-m comparison
  double spin_up = 5.0;
  std::vector<Eigen::Index> m_figure = {10, 50};
  std::vector<Eigen::Index> m_rmse = {5, 10, 20, 50, 100, 200};
  std::size_t rmse_seeds = 3;
  std::size_t lag_count = 25;
  double max_lag = 10.0;
  double saturation = 0.95;
  std::size_t eval_stride = 10;
  std::uint64_t seed = 1;
  double init_spread = 0.1;
};

struct DyadFigureRun {
  DyadDirection direction = DyadDirection::HiddenV;
  Eigen::Index m = 0;
  AciCirSeries series;
};

struct DyadRmsePoint {
  Eigen::Index m = 0;
  std::size_t seed_index = 0;
  double filter_rmse = 0.0;
  double smoother_rmse = 0.0;
};

struct DyadAciResult {
  DyadAciParams params;
  DyadTruth truth_figure;
  std::vector<DyadFigureRun> figures;
  DyadTruth truth_rmse;
  std::vector<DyadRmsePoint> rmse;   // v -> u direction
  double oracle_filter_rmse = 0.0;   // conditional-Gaussian reference
  double oracle_smoother_rmse = 0.0;

  double mean_rmse(Eigen::Index m, bool smoother) const;
};

DyadAciResult run_dyad_aci_experiment(const DyadAciParams& params);

// --------------------------------------------------------------------------
// Lorenz-84 discovery experiment

struct L84DiscoverParams {
  Lorenz84Config model;
  double tau = 0.001;
  double t_end = 500.0;
  double spin_up = 10.0;
  std::size_t iterations = 120;
  Eigen::Index ensemble_size = 50;
  double ce_threshold = 1e-3;
  Eigen::Index ce_rate_stride = 10;
  bool sample_mean = false;
  std::uint64_t seed = 1;
  double init_spread = 0.1;
};

struct L84DiscoverResult {
  L84DiscoverParams params;
  LearnState state;
  PolynomialModel truth_model;
  Eigen::MatrixXi truth_support;
  TruthPaths truth;
  TimeGrid grid;
};

PolynomialModel lorenz84_truth_model(const Lorenz84Config& cfg, const CandidateLibrary& lib);
PolynomialModel lorenz84_initial_guess(const CandidateLibrary& lib, const Lorenz84Config& cfg);

L84DiscoverResult run_l84_discover_experiment(const L84DiscoverParams& params);

// --------------------------------------------------------------------------
// Linear-Gaussian consistency experiment (scalar OU benchmark)

struct LinearConsistencyParams {
  double tau = 0.005;
  double t_end = 50.0;
  double window_lo = 10.0;
  double window_hi = 50.0;
  Eigen::Index m_reference = 2000;
  std::vector<Eigen::Index> m_list = {10, 50, 200, 1000};
  std::size_t seeds_per_m = 3;
  std::size_t cross_seeds = 5;
  std::uint64_t seed = 1;
};

struct LinearMomentError {
  Eigen::Index m = 0;
  double filter_var_rel_err = 0.0;   // vs the stationary Riccati value
  double smoother_var_rel_err = 0.0; // vs the stationary RTS value
};

struct CrossCovSeed {
  std::size_t seed_index = 0;
  double deviation_stochastic = 0.0;     // time-mean of P_fs - P_f
  double deviation_deterministic = 0.0;
};

struct LinearConsistencyResult {
  LinearConsistencyParams params;
  double filter_stationary = 0.0;    // sqrt(2) - 1
  double smoother_stationary = 0.0;  // 1 / (2 sqrt(2))
  std::vector<LinearMomentError> moment_errors;
  std::vector<CrossCovSeed> cross;
  // One-seed cross-covariance time series for plotting.
  std::vector<double> times, pfs_stochastic, pfs_deterministic, pf_empirical;
};

LinearConsistencyResult run_linear_consistency_experiment(const LinearConsistencyParams& params);

// --------------------------------------------------------------------------
// Config plumbing shared by the CLI and tests

L96TableParams l96_params_from_config(const Config& cfg);
DyadAciParams dyad_params_from_config(const Config& cfg);
L84DiscoverParams l84_params_from_config(const Config& cfg);
LinearConsistencyParams linear_params_from_config(const Config& cfg);

// Runs the named experiment and writes its CSV outputs under out_dir.
// Returns 0 on success. Unexpected divergence or bad configuration throws.
int run_experiment(const std::string& name, const Config& cfg,
                   const std::filesystem::path& out_dir);

}  // namespace enkbs
