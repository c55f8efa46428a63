#include "enkbs/smoother.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "enkbs/localization.hpp"

namespace enkbs {
namespace {

bool ensemble_ok(const Eigen::MatrixXd& members, double threshold) {
  return members.allFinite() && members.cwiseAbs().maxCoeff() <= threshold;
}

class SmootherStepper {
 public:
  SmootherStepper(const SdeModel& model, const TimeGrid& grid, const SmootherOptions& opts,
                  Eigen::Index m)
      : model_(model), grid_(grid), opts_(opts), tau_(grid.dt), sqrt_tau_(std::sqrt(grid.dt)) {
    if (opts_.taper_ff &&
        (opts_.taper_ff->rows() != model.state_dim || opts_.taper_ff->cols() != model.state_dim))
      throw std::invalid_argument("run_smoother: taper_ff has wrong shape");
    drift_.resize(model.state_dim, m);
    diff_.resize(model.state_dim, m);
    solved_.resize(model.state_dim, m);
    scaled_noise_.resize(model.state_dim, m);
    p_tilde_.resize(model.state_dim, model.state_dim);
  }

  // k+1 -> k update in place; returns false when Ptilde cannot be factorized.
  bool step_down(Eigen::MatrixXd& members, const Eigen::Ref<const Eigen::MatrixXd>& f_members,
                 const Eigen::Ref<const Eigen::MatrixXd>& f_cov,
                 const Eigen::Ref<const Eigen::MatrixXd>& noise_b,
                 const Eigen::VectorXd& obs_value, std::size_t k) {
    const double t_next = grid_.time(k + 1);
    model_.signal_drift(members, obs_value, t_next, drift_);

    if (opts_.taper_ff)
      p_tilde_ = f_cov.cwiseProduct(*opts_.taper_ff);
    else
      p_tilde_ = f_cov;
    p_tilde_.diagonal().array() += ridge_jitter(p_tilde_, opts_.jitter_scale);
    ldlt_.compute(p_tilde_);
    if (ldlt_.info() != Eigen::Success) return false;

    diff_ = members - f_members;
    solved_ = ldlt_.solve(diff_);
    if (!solved_.allFinite()) return false;

    members -= tau_ * drift_;
    scaled_noise_.noalias() = model_.sigma_sqrt * noise_b;
    members -= sqrt_tau_ * scaled_noise_;
    members.noalias() -= tau_ * (model_.sigma * solved_);
    return true;
  }

 private:
  const SdeModel& model_;
  TimeGrid grid_;
  SmootherOptions opts_;
  double tau_, sqrt_tau_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  Eigen::MatrixXd drift_, diff_, solved_, scaled_noise_, p_tilde_;
};

}  // namespace

Eigen::MatrixXd enkbs_step(const Eigen::Ref<const Eigen::MatrixXd>& smoother_members,
                           const Eigen::Ref<const Eigen::MatrixXd>& filter_members,
                           const Eigen::Ref<const Eigen::MatrixXd>& filter_cov,
                           const Eigen::Ref<const Eigen::MatrixXd>& noise_b,
                           const SdeModel& model, const TimeGrid& grid,
                           const Eigen::VectorXd& obs_value, std::size_t k,
                           const SmootherOptions& opts) {
  SmootherStepper stepper(model, grid, opts, smoother_members.cols());
  Eigen::MatrixXd members = smoother_members;
  if (!stepper.step_down(members, filter_members, filter_cov, noise_b, obs_value, k))
    throw DivergenceError("enkbs_step: filter covariance not invertible", k);
  if (!ensemble_ok(members, opts.divergence_threshold))
    throw DivergenceError("enkbs_step: ensemble blow-up", k);
  return members;
}

SmootherRun run_smoother(const FilterRun& filter, const SdeModel& model, const TimeGrid& grid,
                         const Trajectory& observations, const SmootherOptions& opts) {
  const std::size_t K = grid.steps;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  SmootherRun run;
  run.grid = grid;
  run.moments.grid = grid;
  run.moments.tag = MomentTag::Smoother;
  run.moments.means = Eigen::MatrixXd::Constant(model.state_dim, K + 1, nan);
  run.moments.covs.assign(K + 1,
                          Eigen::MatrixXd::Constant(model.state_dim, model.state_dim, nan));

  if (!filter.ok()) {  // nothing to smooth; propagate the failure point
    run.diverged_at = filter.diverged_at;
    return run;
  }
  if (filter.members.size() != K + 1 || filter.noise.size() != K)
    throw std::invalid_argument("run_smoother: filter histories incomplete");
  if (observations.values.cols() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("run_smoother: observation trajectory does not match the grid");

  if (opts.record_members) run.members.assign(K + 1, Eigen::MatrixXd());

  Eigen::MatrixXd members = filter.members[K];  // terminal identity, bit-exact
  if (opts.record_members) run.members[K] = members;
  run.moments.means.col(static_cast<Eigen::Index>(K)) = empirical_mean(members);
  run.moments.covs[K] = empirical_cov(members);

  SmootherStepper stepper(model, grid, opts, members.cols());
  for (std::size_t k = K; k-- > 0;) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd y_next = observations.values.col(kk + 1);
    const bool factored = stepper.step_down(members, filter.members[k + 1],
                                            filter.moments.covs[k + 1], filter.noise[k], y_next, k);
    if (!factored || !ensemble_ok(members, opts.divergence_threshold)) {
      run.diverged_at = k;  // moments below k stay NaN, members stay empty
      break;
    }
    if (opts.record_members) run.members[k] = members;
    run.moments.means.col(kk) = empirical_mean(members);
    run.moments.covs[k] = empirical_cov(members);
  }
  return run;
}

WindowMoments smoother_window_moments(const FilterRun& filter, const SdeModel& model,
                                      const TimeGrid& grid, const Trajectory& observations,
                                      std::size_t k_lo, std::size_t k_hi,
                                      const SmootherOptions& opts) {
  if (k_hi > grid.steps || k_lo > k_hi)
    throw std::invalid_argument("smoother_window_moments: bad window");
  if (!filter.ok() && filter.diverged_at.value() <= k_hi)
    return {Eigen::VectorXd(), Eigen::MatrixXd(), filter.diverged_at};

  WindowMoments out;
  Eigen::MatrixXd members = filter.members[k_hi];
  SmootherStepper stepper(model, grid, opts, members.cols());
  for (std::size_t k = k_hi; k-- > k_lo;) {
    const Eigen::VectorXd y_next = observations.values.col(static_cast<Eigen::Index>(k) + 1);
    const bool factored = stepper.step_down(members, filter.members[k + 1],
                                            filter.moments.covs[k + 1], filter.noise[k], y_next, k);
    if (!factored || !ensemble_ok(members, opts.divergence_threshold)) {
      out.diverged_at = k;
      return out;
    }
  }
  out.mean = empirical_mean(members);
  out.cov = empirical_cov(members);
  return out;
}

}  // namespace enkbs
