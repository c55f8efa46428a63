#include "enkbs/sde.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace enkbs {

TimeGrid::TimeGrid(double t0_, double dt_, std::size_t steps_) : t0(t0_), dt(dt_), steps(steps_) {
  if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
}

TimeGrid TimeGrid::span(double t0, double t_end, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
  if (!(t_end > t0)) throw std::invalid_argument("TimeGrid: t_end must exceed t0");
  const double raw = (t_end - t0) / dt;
  const auto steps = static_cast<std::size_t>(std::llround(raw));
  const double recovered = static_cast<double>(steps) * dt;
  const double tol = 16.0 * std::numeric_limits<double>::epsilon() *
                     std::max({1.0, std::abs(t_end - t0), recovered});
  if (steps == 0 || std::abs(recovered - (t_end - t0)) > tol)
    throw std::invalid_argument("TimeGrid: dt does not divide the span");
  return TimeGrid(t0, dt, steps);
}

std::size_t TimeGrid::index_at(double t) const {
  const double raw = (t - t0) / dt;
  const auto k = static_cast<long long>(std::llround(raw));
  if (k <= 0) return 0;
  return std::min(static_cast<std::size_t>(k), steps);
}

namespace {

void check_sqrt_factor(const Eigen::MatrixXd& cov, const Eigen::MatrixXd& root,
                       const char* name) {
  if (root.rows() != cov.rows() || root.cols() != cov.cols())
    throw std::invalid_argument(std::string(name) + ": square-root factor has wrong shape");
  const double ref = cov.norm();
  const double err = (root * root.transpose() - cov).norm();
  if (err > 1e-12 * std::max(ref, 1.0))
    throw std::invalid_argument(std::string(name) + ": S*S^T does not match the covariance");
}

void check_symmetric(const Eigen::MatrixXd& cov, const char* name) {
  if (cov.rows() != cov.cols())
    throw std::invalid_argument(std::string(name) + ": covariance must be square");
  if ((cov - cov.transpose()).norm() > 1e-12 * std::max(cov.norm(), 1.0))
    throw std::invalid_argument(std::string(name) + ": covariance must be symmetric");
}

}  // namespace

void SdeModel::validate() const {
  if (state_dim <= 0 || obs_dim <= 0)
    throw std::invalid_argument("SdeModel: dimensions must be positive");
  if (!signal_drift || !obs_drift) throw std::invalid_argument("SdeModel: drifts must be set");
  if (sigma.rows() != state_dim || gamma.rows() != obs_dim)
    throw std::invalid_argument("SdeModel: covariance dimensions do not match");
  check_symmetric(sigma, "Sigma");
  check_symmetric(gamma, "Gamma");
  check_sqrt_factor(sigma, sigma_sqrt, "Sigma");
  check_sqrt_factor(gamma, gamma_sqrt, "Gamma");
}

Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& mat) {
  if (mat.rows() != mat.cols()) throw std::invalid_argument("spd_sqrt: matrix must be square");
  if (mat.isDiagonal(1e-15)) {
    Eigen::MatrixXd root = Eigen::MatrixXd::Zero(mat.rows(), mat.cols());
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
      const double d = mat(i, i);
      if (d < 0.0) throw std::invalid_argument("spd_sqrt: negative diagonal entry");
      root(i, i) = std::sqrt(d);
    }
    return root;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(mat);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // Semi-definite fallback.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mat);
  const double floor = -1e-10 * std::max(mat.norm(), 1.0);
  if (es.eigenvalues().minCoeff() < floor)
    throw std::invalid_argument("spd_sqrt: matrix is not positive semidefinite");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

SdeModel make_model(Eigen::Index state_dim, Eigen::Index obs_dim, BatchDrift f, BatchDrift h,
                    Eigen::MatrixXd sigma, Eigen::MatrixXd gamma) {
  SdeModel model;
  model.state_dim = state_dim;
  model.obs_dim = obs_dim;
  model.signal_drift = std::move(f);
  model.obs_drift = std::move(h);
  model.sigma_sqrt = spd_sqrt(sigma);
  model.gamma_sqrt = spd_sqrt(gamma);
  model.sigma = std::move(sigma);
  model.gamma = std::move(gamma);
  model.validate();
  return model;
}

TruthPaths integrate_truth(const SdeModel& model, const TimeGrid& grid, const Eigen::VectorXd& x0,
                           const Eigen::VectorXd& y0, const NoiseStream& noise) {
  model.validate();
  if (x0.size() != model.state_dim || y0.size() != model.obs_dim)
    throw std::invalid_argument("integrate_truth: initial state dimensions do not match");
  if (!x0.allFinite() || !y0.allFinite())
    throw std::invalid_argument("integrate_truth: initial state must be finite");

  const double tau = grid.dt;
  const double sqrt_tau = std::sqrt(tau);

  TruthPaths paths;
  paths.state.grid = grid;
  paths.obs.grid = grid;
  paths.state.values.resize(model.state_dim, static_cast<Eigen::Index>(grid.size()));
  paths.obs.values.resize(model.obs_dim, static_cast<Eigen::Index>(grid.size()));
  paths.state.values.col(0) = x0;
  paths.obs.values.col(0) = y0;

  Eigen::MatrixXd fx(model.state_dim, 1), hx(model.obs_dim, 1);
  Eigen::VectorXd b(model.state_dim), w(model.obs_dim);

  for (std::size_t k = 0; k < grid.steps; ++k) {
    const double t = grid.time(k);
    const auto kk = static_cast<Eigen::Index>(k);
    const auto x_k = paths.state.values.col(kk);
    const auto y_k = paths.obs.values.col(kk);

    model.signal_drift(x_k, y_k, t, fx);
    noise.fill_gaussians(NoiseTag::TruthSignal, 0, k, b);
    paths.state.values.col(kk + 1) =
        x_k + tau * fx.col(0) + sqrt_tau * (model.sigma_sqrt * b);

    // Semi-implicit: observation drift sees the updated state.
    model.obs_drift(paths.state.values.col(kk + 1), y_k, t, hx);
    noise.fill_gaussians(NoiseTag::TruthObs, 0, k, w);
    paths.obs.values.col(kk + 1) = y_k + tau * hx.col(0) + sqrt_tau * (model.gamma_sqrt * w);

    const auto x_next = paths.state.values.col(kk + 1);
    const auto y_next = paths.obs.values.col(kk + 1);
    if (!x_next.allFinite() || !y_next.allFinite() ||
        x_next.cwiseAbs().maxCoeff() > kBlowUpThreshold ||
        y_next.cwiseAbs().maxCoeff() > kBlowUpThreshold)
      throw DivergenceError("integrate_truth: trajectory blow-up", k + 1);
  }
  return paths;
}

}  // namespace enkbs
