#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "enkbs/noise.hpp"

namespace enkbs {

// Raised when a trajectory leaves the admissible region (non-finite values or
// components beyond the blow-up threshold). Carries the offending step.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Any |component| beyond this is treated as numerical divergence.
inline constexpr double kBlowUpThreshold = 1e8;

// Uniform grid t_k = t0 + k*dt, k = 0..steps.
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;

  TimeGrid() = default;
  TimeGrid(double t0_, double dt_, std::size_t steps_);

  // Grid covering [t0, t_end]; rounds (t_end - t0)/dt to the nearest integer
  // and requires the product to recover the span to ulp-scale accuracy.
  static TimeGrid span(double t0, double t_end, double dt);

  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
  double t_end() const { return time(steps); }
  std::size_t size() const { return steps + 1; }  // number of grid points
  std::size_t index_at(double t) const;           // nearest grid index, clamped
};

// Time-indexed path; column k holds the value at t_k.
struct Trajectory {
  TimeGrid grid;
  Eigen::MatrixXd values;  // dim x (steps+1)

  Eigen::Index dim() const { return values.rows(); }
};

// Drift evaluated for a batch of states at once (column = one state sample).
// obs is the current observation value; out has the same shape as state for
// the signal drift and obs_dim rows for the observation drift.
using BatchDrift = std::function<void(const Eigen::Ref<const Eigen::MatrixXd>& state,
                                      const Eigen::Ref<const Eigen::VectorXd>& obs, double t,
                                      Eigen::Ref<Eigen::MatrixXd> out)>;

// Hidden-signal + observation pair
//   dx = f(x, y, t) dt + Sigma^{1/2} dB
//   dy = h(x, y, t) dt + Gamma^{1/2} dW
// with user-supplied square roots of the noise covariances.
struct SdeModel {
  Eigen::Index state_dim = 0;
  Eigen::Index obs_dim = 0;
  BatchDrift signal_drift;  // f
  BatchDrift obs_drift;     // h
  Eigen::MatrixXd sigma;       // Sigma, state_dim x state_dim
  Eigen::MatrixXd sigma_sqrt;  // S with S S^T = Sigma
  Eigen::MatrixXd gamma;       // Gamma, obs_dim x obs_dim
  Eigen::MatrixXd gamma_sqrt;

  // Checks dimensions, symmetry, and that the supplied square roots factor
  // their covariances to 1e-12 relative Frobenius error.
  void validate() const;
};

// Symmetric PSD square root; Cholesky for SPD inputs, with a symmetric
// eigendecomposition fallback for semidefinite ones (e.g. zero noise).
Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& mat);

// Convenience constructor that fills in Cholesky square roots.
SdeModel make_model(Eigen::Index state_dim, Eigen::Index obs_dim, BatchDrift f, BatchDrift h,
                    Eigen::MatrixXd sigma, Eigen::MatrixXd gamma);

struct TruthPaths {
  Trajectory state;  // x_ref
  Trajectory obs;    // y
};

// Coupled Euler-Maruyama reference integration,
//   x_{k+1} = x_k + tau f(x_k, y_k, t_k) + sqrt(tau) Sigma^{1/2} B_k
//   y_{k+1} = y_k + tau h(x_{k+1}, y_k, t_k) + sqrt(tau) Gamma^{1/2} W_k,
// semi-implicit in the observation drift. Draws are keyed TruthSignal /
// TruthObs so reruns with the same seed reproduce the paths bit-exactly.
// Throws DivergenceError on blow-up.
TruthPaths integrate_truth(const SdeModel& model, const TimeGrid& grid,
                           const Eigen::VectorXd& x0, const Eigen::VectorXd& y0,
                           const NoiseStream& noise);

}  // namespace enkbs
