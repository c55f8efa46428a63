#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "enkbs/filter.hpp"

namespace enkbs {

struct SmootherOptions {
  // Taper for the filter covariance inside the smoother gain (state_dim
  // square block of a localization matrix); empty means no localization.
  std::optional<Eigen::MatrixXd> taper_ff;
  // Ridge scale for the jitter lambda = scale * trace(P)/n added before the
  // covariance is inverted.
  double jitter_scale = 1e-8;
  double divergence_threshold = kBlowUpThreshold;
  // Member histories can be dropped when only moments are needed.
  bool record_members = true;
};

// Backward pass. x_s(T) = x_f(T) exactly; the moment series carries NaN below
// the first failing step when the pass diverges.
struct SmootherRun {
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> members;  // index k holds the ensemble at t_k
  MomentSeries moments;
  std::optional<std::size_t> diverged_at;  // highest step whose update failed

  bool ok() const { return !diverged_at.has_value(); }
};

// One backward step k+1 -> k:
//   x_{s,k}^i = x_{s,k+1}^i - tau f(x_{s,k+1}^i, t_{k+1})
//             - sqrt(tau) Sigma^{1/2} B_k^i
//             - tau Sigma Ptilde^{-1} (x_{s,k+1}^i - x_{f,k+1}^i),
// where Ptilde = (taper o P_{f,k+1}) + lambda I and B_k is the forward-pass
// draw, reused bit-exactly. Throws DivergenceError on blow-up or a
// non-factorizable Ptilde.
Eigen::MatrixXd enkbs_step(const Eigen::Ref<const Eigen::MatrixXd>& smoother_members,
                           const Eigen::Ref<const Eigen::MatrixXd>& filter_members,
                           const Eigen::Ref<const Eigen::MatrixXd>& filter_cov,
                           const Eigen::Ref<const Eigen::MatrixXd>& noise_b,
                           const SdeModel& model, const TimeGrid& grid,
                           const Eigen::VectorXd& obs_value, std::size_t k,
                           const SmootherOptions& opts = {});

// Full backward pass from t = T, initialized at the filter terminal ensemble.
// Inflation is never applied here.
SmootherRun run_smoother(const FilterRun& filter, const SdeModel& model, const TimeGrid& grid,
                         const Trajectory& observations, const SmootherOptions& opts = {});

// Moments at step k_lo of a smoother restricted to the window
// [t_{k_lo}, t_{k_hi}], initialized from the filter ensemble at k_hi. This is
// the lagged-smoother primitive; k_hi == k_lo returns the filter moments.
struct WindowMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::optional<std::size_t> diverged_at;
};
WindowMoments smoother_window_moments(const FilterRun& filter, const SdeModel& model,
                                      const TimeGrid& grid, const Trajectory& observations,
                                      std::size_t k_lo, std::size_t k_hi,
                                      const SmootherOptions& opts = {});

}  // namespace enkbs
