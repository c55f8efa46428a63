#include "enkbs/filter.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace enkbs {
namespace {

bool ensemble_ok(const Eigen::MatrixXd& members, double threshold) {
  return members.allFinite() && members.cwiseAbs().maxCoeff() <= threshold;
}

// Workspace shared by the single-step API and run_filter so both produce
// bit-identical updates.
class FilterStepper {
 public:
  FilterStepper(const SdeModel& model, const TimeGrid& grid, const FilterOptions& opts,
                Eigen::Index m)
      : model_(model),
        opts_(opts),
        tau_(grid.dt),
        sqrt_tau_(std::sqrt(grid.dt)),
        gamma_ldlt_(model.gamma),
        grid_(grid) {
    if (gamma_ldlt_.info() != Eigen::Success)
      throw std::invalid_argument("run_filter: Gamma is not factorizable");
    if (opts_.taper_xh &&
        (opts_.taper_xh->rows() != model.state_dim || opts_.taper_xh->cols() != model.obs_dim))
      throw std::invalid_argument("run_filter: taper_xh has wrong shape");
    if (opts_.inflation < 1.0) throw std::invalid_argument("run_filter: inflation must be >= 1");
    drift_.resize(model.state_dim, m);
    h_vals_.resize(model.obs_dim, m);
    b_.resize(model.state_dim, m);
    w_.resize(model.obs_dim, m);
    innov_.resize(model.obs_dim, m);
    scaled_noise_.resize(model.state_dim, m);
    anom_x_.resize(model.state_dim, m);
    anom_h_.resize(model.obs_dim, m);
    pxh_.resize(model.state_dim, model.obs_dim);
    phh_.resize(model.obs_dim, model.obs_dim);
    gain_.resize(model.state_dim, model.obs_dim);
  }

  // Advances the ensemble in place and exposes the B_k draw used.
  void step(Eigen::MatrixXd& members, std::size_t k, const Eigen::VectorXd& obs_value,
            const Eigen::VectorXd& obs_increment, const NoiseStream& noise) {
    const double t = grid_.time(k);
    const double m = static_cast<double>(members.cols());

    model_.signal_drift(members, obs_value, t, drift_);
    model_.obs_drift(members, obs_value, t, h_vals_);
    noise.fill_gaussian_matrix(NoiseTag::EnsembleSignal, k, b_);

    const Eigen::VectorXd x_mean = members.rowwise().mean();
    const Eigen::VectorXd h_mean = h_vals_.rowwise().mean();
    anom_x_ = members.colwise() - x_mean;
    anom_h_ = h_vals_.colwise() - h_mean;
    pxh_.noalias() = anom_x_ * anom_h_.transpose();
    pxh_ /= (m - 1.0);
    if (opts_.taper_xh) pxh_ = pxh_.cwiseProduct(*opts_.taper_xh);

    // Gain against tau P_hh + Gamma, the increment-observation form whose
    // tau -> 0 limit is P_xh Gamma^{-1}. The bare Gamma^{-1} gain violates the
    // forward-Euler stability bound once tau * |gain| * |dh/dx| gets near 1.
    phh_.noalias() = anom_h_ * anom_h_.transpose();
    phh_ *= tau_ / (m - 1.0);
    phh_ += model_.gamma;
    denom_ldlt_.compute(phh_);
    gain_ = denom_ldlt_.solve(pxh_.transpose()).transpose();

    if (opts_.deterministic) {
      // Innovation against the member/mean average, no simulated obs noise.
      innov_ = (-0.5 * tau_) * h_vals_;
      innov_.colwise() += obs_increment - (0.5 * tau_) * h_mean;
    } else {
      noise.fill_gaussian_matrix(NoiseTag::EnsembleObs, k, w_);
      innov_ = (-tau_) * h_vals_;
      innov_.noalias() -= sqrt_tau_ * (model_.gamma_sqrt * w_);
      innov_.colwise() += obs_increment;
    }

    members += tau_ * drift_;
    scaled_noise_.noalias() = model_.sigma_sqrt * b_;
    members += sqrt_tau_ * scaled_noise_;
    members.noalias() += gain_ * innov_;

    if (opts_.inflation > 1.0) inflate(members, opts_.inflation);
  }

  const Eigen::MatrixXd& last_signal_noise() const { return b_; }

 private:
  const SdeModel& model_;
  FilterOptions opts_;
  double tau_, sqrt_tau_;
  Eigen::LDLT<Eigen::MatrixXd> gamma_ldlt_;
  Eigen::LDLT<Eigen::MatrixXd> denom_ldlt_;
  TimeGrid grid_;
  Eigen::MatrixXd drift_, h_vals_, b_, w_, innov_, scaled_noise_, anom_x_, anom_h_, pxh_, phh_,
      gain_;
};

EnsembleState step_once(const EnsembleState& ens, const SdeModel& model, const TimeGrid& grid,
                        const Eigen::VectorXd& obs_value, const Eigen::VectorXd& obs_increment,
                        const NoiseStream& noise, const FilterOptions& opts) {
  model.validate();
  if (ens.members.rows() != model.state_dim)
    throw std::invalid_argument("enkbf_step: member dimension mismatch");
  if (ens.size() < 2) throw std::invalid_argument("enkbf_step: needs at least two members");

  FilterStepper stepper(model, grid, opts, ens.size());
  EnsembleState out;
  out.members = ens.members;
  out.step = ens.step + 1;
  stepper.step(out.members, ens.step, obs_value, obs_increment, noise);
  out.noise = stepper.last_signal_noise();
  if (!ensemble_ok(out.members, opts.divergence_threshold))
    throw DivergenceError("enkbf_step: ensemble blow-up", out.step);
  return out;
}

}  // namespace

EnsembleState enkbf_step(const EnsembleState& ens, const SdeModel& model, const TimeGrid& grid,
                         const Eigen::VectorXd& obs_value, const Eigen::VectorXd& obs_increment,
                         const NoiseStream& noise, const FilterOptions& opts) {
  return step_once(ens, model, grid, obs_value, obs_increment, noise, opts);
}

EnsembleState enkbf_step_deterministic(const EnsembleState& ens, const SdeModel& model,
                                       const TimeGrid& grid, const Eigen::VectorXd& obs_value,
                                       const Eigen::VectorXd& obs_increment,
                                       const NoiseStream& noise, const FilterOptions& opts) {
  FilterOptions det = opts;
  det.deterministic = true;
  return step_once(ens, model, grid, obs_value, obs_increment, noise, det);
}

FilterRun run_filter(const SdeModel& model, const TimeGrid& grid, const Trajectory& observations,
                     const Eigen::MatrixXd& initial_ensemble, const NoiseStream& noise,
                     const FilterOptions& opts) {
  model.validate();
  if (initial_ensemble.rows() != model.state_dim)
    throw std::invalid_argument("run_filter: ensemble dimension mismatch");
  if (initial_ensemble.cols() < 2)
    throw std::invalid_argument("run_filter: needs at least two members");
  if (observations.dim() != model.obs_dim ||
      observations.values.cols() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("run_filter: observation trajectory does not match the grid");

  const std::size_t K = grid.steps;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  FilterRun run;
  run.grid = grid;
  run.seed = noise.seed();
  run.options = opts;
  run.members.reserve(K + 1);
  run.noise.reserve(K);
  run.moments.grid = grid;
  run.moments.tag = MomentTag::Filter;
  run.moments.means = Eigen::MatrixXd::Constant(model.state_dim, K + 1, nan);
  run.moments.covs.assign(K + 1,
                          Eigen::MatrixXd::Constant(model.state_dim, model.state_dim, nan));

  Eigen::MatrixXd members = initial_ensemble;
  run.members.push_back(members);
  run.moments.means.col(0) = empirical_mean(members);
  run.moments.covs[0] = empirical_cov(members);

  FilterStepper stepper(model, grid, opts, members.cols());
  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd y_k = observations.values.col(kk);
    const Eigen::VectorXd dy = observations.values.col(kk + 1) - observations.values.col(kk);
    stepper.step(members, k, y_k, dy, noise);
    run.noise.push_back(stepper.last_signal_noise());
    if (!ensemble_ok(members, opts.divergence_threshold)) {
      run.diverged_at = k + 1;
      break;
    }
    run.members.push_back(members);
    run.moments.means.col(kk + 1) = empirical_mean(members);
    run.moments.covs[k + 1] = empirical_cov(members);
  }
  return run;
}

}  // namespace enkbs
