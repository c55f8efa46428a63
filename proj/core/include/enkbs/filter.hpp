#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "enkbs/ensemble.hpp"
#include "enkbs/noise.hpp"
#include "enkbs/sde.hpp"

namespace enkbs {

struct FilterOptions {
  // Taper for the state-observation cross-covariance (state_dim x obs_dim
  // block of a localization matrix); empty means no localization.
  std::optional<Eigen::MatrixXd> taper_xh;
  // Multiplicative inflation factor delta (delta^2 is the covariance scale);
  // applied to the updated ensemble after each step, 1 = off.
  double inflation = 1.0;
  // Deterministic update variant: the gain acts against the member/mean
  // average of the simulated drift and no observation noise is drawn. Used
  // for the filter-smoother cross-covariance mismatch experiment.
  bool deterministic = false;
  double divergence_threshold = kBlowUpThreshold;
};

// Complete forward pass. Histories are truncated at the first divergent step
// and the moment series carries NaN from there on, so downstream error
// metrics propagate divergence as data.
struct FilterRun {
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> members;  // per recorded step, state_dim x m
  std::vector<Eigen::MatrixXd> noise;    // B_k for k = 0..K-1 (as far as reached)
  MomentSeries moments;
  std::optional<std::size_t> diverged_at;
  std::uint64_t seed = 0;  // seed of the stream that drew the ensemble noise
  FilterOptions options;

  Eigen::Index ensemble_size() const { return members.empty() ? 0 : members.front().cols(); }
  bool ok() const { return !diverged_at.has_value(); }
};

// One step of the stochastic (or deterministic-variant) update:
//   x_{k+1}^i = x_k^i + tau f(x_k^i, t_k) + sqrt(tau) Sigma^{1/2} B_k^i
//             + P_xh Gamma^{-1} (dy - dy^i),
//   dy^i = tau h(x_k^i, t_k) + sqrt(tau) Gamma^{1/2} W_k^i,
// with P_xh tapered when localization is on and inflation applied to the
// result. The output records B_k. Throws DivergenceError if the updated
// ensemble is not finite.
EnsembleState enkbf_step(const EnsembleState& ens, const SdeModel& model, const TimeGrid& grid,
                         const Eigen::VectorXd& obs_value, const Eigen::VectorXd& obs_increment,
                         const NoiseStream& noise, const FilterOptions& opts = {});

EnsembleState enkbf_step_deterministic(const EnsembleState& ens, const SdeModel& model,
                                       const TimeGrid& grid, const Eigen::VectorXd& obs_value,
                                       const Eigen::VectorXd& obs_increment,
                                       const NoiseStream& noise, const FilterOptions& opts = {});

// Forward pass over the whole grid, recording members, signal-noise draws,
// and empirical moments at every step.
FilterRun run_filter(const SdeModel& model, const TimeGrid& grid, const Trajectory& observations,
                     const Eigen::MatrixXd& initial_ensemble, const NoiseStream& noise,
                     const FilterOptions& opts = {});

}  // namespace enkbs
