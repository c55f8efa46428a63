#include "enkbs/ensemble.hpp"

#include <stdexcept>

namespace enkbs {

Eigen::VectorXd empirical_mean(const Eigen::Ref<const Eigen::MatrixXd>& members) {
  if (members.cols() < 1) throw std::invalid_argument("empirical_mean: empty ensemble");
  return members.rowwise().mean();
}

Eigen::MatrixXd empirical_cov(const Eigen::Ref<const Eigen::MatrixXd>& members) {
  const Eigen::Index m = members.cols();
  if (m < 2) throw std::invalid_argument("empirical_cov: needs at least two members");
  const Eigen::MatrixXd anomalies = members.colwise() - members.rowwise().mean().eval();
  Eigen::MatrixXd cov = (anomalies * anomalies.transpose()) / static_cast<double>(m - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

Eigen::MatrixXd cross_cov(const Eigen::Ref<const Eigen::MatrixXd>& a,
                          const Eigen::Ref<const Eigen::MatrixXd>& b) {
  const Eigen::Index m = a.cols();
  if (m < 2) throw std::invalid_argument("cross_cov: needs at least two members");
  if (b.cols() != m) throw std::invalid_argument("cross_cov: sample sizes differ");
  const Eigen::MatrixXd anom_a = a.colwise() - a.rowwise().mean().eval();
  const Eigen::MatrixXd anom_b = b.colwise() - b.rowwise().mean().eval();
  return (anom_a * anom_b.transpose()) / static_cast<double>(m - 1);
}

Eigen::MatrixXd cross_cov_xh(const Eigen::Ref<const Eigen::MatrixXd>& members,
                             const SdeModel& model, double t, const Eigen::VectorXd& obs) {
  Eigen::MatrixXd h_vals(model.obs_dim, members.cols());
  model.obs_drift(members, obs, t, h_vals);
  return cross_cov(members, h_vals);
}

void inflate(Eigen::Ref<Eigen::MatrixXd> members, double delta) {
  if (delta < 1.0) throw std::invalid_argument("inflate: delta must be >= 1");
  if (delta == 1.0) return;
  const Eigen::VectorXd mean = members.rowwise().mean();
  members = (delta * (members.colwise() - mean)).colwise() + mean;
}

}  // namespace enkbs
