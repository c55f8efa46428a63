#pragma once

#include <vector>

#include <Eigen/Core>

#include "enkbs/sde.hpp"

namespace enkbs {

// Ensemble at one time step. Column i is member x^{(i)}. `noise` records the
// signal-noise draw B that produced this state in the forward pass (empty for
// the initial ensemble); the backward pass reuses exactly these increments.
struct EnsembleState {
  Eigen::MatrixXd members;  // state_dim x m
  std::size_t step = 0;
  Eigen::MatrixXd noise;    // state_dim x m, or empty

  Eigen::Index size() const { return members.cols(); }
  Eigen::Index dim() const { return members.rows(); }
};

enum class MomentTag { Filter, Smoother };

// Per-step empirical means and covariances of a filter or smoother pass.
// Covariances are stored symmetrized; entries after a divergence are NaN.
struct MomentSeries {
  TimeGrid grid;
  Eigen::MatrixXd means;              // dim x (steps+1)
  std::vector<Eigen::MatrixXd> covs;  // steps+1 symmetric matrices
  MomentTag tag = MomentTag::Filter;

  Eigen::Index dim() const { return means.rows(); }
};

Eigen::VectorXd empirical_mean(const Eigen::Ref<const Eigen::MatrixXd>& members);

// Anomaly outer-product covariance with 1/(m-1) normalization; symmetric PSD
// with rank at most m-1. Requires m >= 2.
Eigen::MatrixXd empirical_cov(const Eigen::Ref<const Eigen::MatrixXd>& members);

// Cross-covariance between two column-aligned samples, one anomaly pass each.
Eigen::MatrixXd cross_cov(const Eigen::Ref<const Eigen::MatrixXd>& a,
                          const Eigen::Ref<const Eigen::MatrixXd>& b);

// P_xh between the ensemble and its observation-drift image h(x^{(i)}).
Eigen::MatrixXd cross_cov_xh(const Eigen::Ref<const Eigen::MatrixXd>& members,
                             const SdeModel& model, double t, const Eigen::VectorXd& obs);

// Multiplicative inflation x^{(i)} <- xbar + delta (x^{(i)} - xbar) in place.
// delta = 1 is the identity; delta < 1 is rejected.
void inflate(Eigen::Ref<Eigen::MatrixXd> members, double delta);

inline EnsembleState inflate(EnsembleState ens, double delta) {
  inflate(ens.members, delta);
  return ens;
}

}  // namespace enkbs
