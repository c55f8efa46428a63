#pragma once

#include <vector>

#include <Eigen/Core>

#include "enkbs/smoother.hpp"

namespace enkbs {

// KL(N(mean_a, cov_a) || N(mean_b, cov_b)). Both covariances receive the
// ridge jitter before factorization. Nonnegative up to roundoff.
double gaussian_kl(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                   const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b,
                   double jitter_scale = 1e-8);

/// Information gain of the smoother conditional over the filter conditional
/// at step k: KL(smoother || filter).
double aci_metric(const MomentSeries& filter, const MomentSeries& smoother, std::size_t k,
                  double jitter_scale = 1e-8);

/// The metric at every step of the shared grid.
std::vector<double> aci_metric_series(const MomentSeries& filter, const MomentSeries& smoother,
                                      double jitter_scale = 1e-8);

// Lagged smoother moments: for each requested lag L and evaluation step k,
// the smoother at t_k assimilating only [t_k, min(t_k + L, T)], initialized
// from the filter ensemble at the window's right end. Lag 0 is the filter.
struct LaggedMoments {
  double lag = 0.0;
  std::vector<std::size_t> eval_steps;
  Eigen::MatrixXd means;              // dim x #eval
  std::vector<Eigen::MatrixXd> covs;  // #eval
};
std::vector<LaggedMoments> lagged_smoother_sweep(const FilterRun& filter, const SdeModel& model,
                                                 const TimeGrid& grid,
                                                 const Trajectory& observations,
                                                 const std::vector<double>& lags,
                                                 const std::vector<std::size_t>& eval_steps,
                                                 const SmootherOptions& opts = {});

// Causal influence range: smallest lag whose information gain reaches the
// stated fraction of the full-window gain. Falls back to the full-window lag
// when no shorter lag saturates; a full-window metric below the noise floor
// reports 0 (no detectable link).
struct CirOptions {
  std::vector<double> lags;        // candidate lags, ascending; capped per-time at T - t
  double saturation = 0.95;        // fraction of the full-window gain
  // Detectability floor for the full-window gain. Finite ensembles carry an
  // O(1e-6) Monte Carlo floor in the metric even with no coupling at all
  // (measured ~3e-6 at m = 50), so anything below this is read as "no link".
  double noise_floor = 1e-5;
  std::size_t eval_stride = 10;    // evaluation-grid decimation
  double jitter_scale = 1e-8;
};

std::vector<double> uniform_lags(std::size_t count, double max_lag);

struct AciCirSeries {
  std::vector<double> times;
  std::vector<double> metric;  // full-window ACI metric at the eval times
  std::vector<double> cir;
};
AciCirSeries compute_aci_cir(const FilterRun& filter, const SmootherRun& full_smoother,
                             const SdeModel& model, const TimeGrid& grid,
                             const Trajectory& observations, const CirOptions& cir_opts,
                             const SmootherOptions& smoother_opts = {});

}  // namespace enkbs
