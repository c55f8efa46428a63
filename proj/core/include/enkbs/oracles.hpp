#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "enkbs/ensemble.hpp"
#include "enkbs/models.hpp"
#include "enkbs/noise.hpp"
#include "enkbs/sde.hpp"

namespace enkbs {

// Linear-Gaussian system dx = F x dt + Sigma^{1/2} dB, dy = H x dt + G^{1/2} dW.
struct LinearModel {
  Eigen::MatrixXd F;
  Eigen::MatrixXd H;
  Eigen::MatrixXd Sigma;
  Eigen::MatrixXd Gamma;
};

struct OracleMoments {
  MomentSeries filter;
  MomentSeries smoother;
};

// Exact continuous-time Kalman-Bucy moments on the Euler grid:
//   dxbar = F xbar dt + K (dy - H xbar dt),       K = P H^T Gamma^{-1},
//   Pdot  = F P + P F^T + Sigma - P H^T Gamma^{-1} H P.
// Throws if the covariance loses positive definiteness.
MomentSeries kalman_bucy_moments(const LinearModel& lm, const TimeGrid& grid,
                                 const Trajectory& observations, const Eigen::VectorXd& mean0,
                                 const Eigen::MatrixXd& cov0);

// Exact continuous-time RTS smoother moments, integrated backward from the
// filter terminal condition:
//   dxbar_s = F xbar_s dt + Sigma P_f^{-1} (xbar_s - xbar_f) dt,
//   Pdot_s  = (F + Sigma P_f^{-1}) P_s + P_s (F + Sigma P_f^{-1})^T - Sigma.
MomentSeries rts_moments(const LinearModel& lm, const MomentSeries& filter);

// Closed-form conditional-Gaussian filter/smoother for the dyad with u
// observed and v hidden. The filter follows the standard conditionally linear
// mean/variance equations driven by du; the smoother is the RTS backward form
// with the hidden-block coefficient -d_v and noise sigma_v^2. These formulas
// are validated against the particle oracle in the test suite.
OracleMoments cgns_dyad_moments(const DyadConfig& cfg, const Trajectory& u_obs,
                                const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0);

// Brute-force bootstrap particle filter with per-step Gaussian increment
// weights, followed by the O(N^2 K) backward marginal-smoothing recursion.
// Aborts (DivergenceError) when the effective sample size collapses below 10.
OracleMoments particle_ffbs(const SdeModel& model, const TimeGrid& grid,
                            const Trajectory& observations, const Eigen::VectorXd& mean0,
                            const Eigen::MatrixXd& cov0, Eigen::Index particles,
                            const NoiseStream& noise);

// sqrt( mean over window steps of |mean(t_k) - truth(t_k)|^2 / dim ). NaN
// moments inside the window yield NaN.
double rmse(const MomentSeries& estimate, const Trajectory& truth, double t_lo, double t_hi);
double rmse(const Eigen::Ref<const Eigen::MatrixXd>& means, const Trajectory& truth,
            double t_lo, double t_hi);

}  // namespace enkbs
