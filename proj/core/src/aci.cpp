#include "enkbs/aci.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "enkbs/localization.hpp"

namespace enkbs {

double gaussian_kl(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                   const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b,
                   double jitter_scale) {
  const Eigen::Index n = mean_a.size();
  if (mean_b.size() != n || cov_a.rows() != n || cov_b.rows() != n)
    throw std::invalid_argument("gaussian_kl: dimension mismatch");

  Eigen::MatrixXd a = cov_a;
  Eigen::MatrixXd b = cov_b;
  a.diagonal().array() += ridge_jitter(a, jitter_scale);
  b.diagonal().array() += ridge_jitter(b, jitter_scale);

  const Eigen::LLT<Eigen::MatrixXd> llt_a(a);
  const Eigen::LLT<Eigen::MatrixXd> llt_b(b);
  if (llt_a.info() != Eigen::Success || llt_b.info() != Eigen::Success)
    throw std::invalid_argument("gaussian_kl: covariance not positive definite after jitter");

  const double trace_term = llt_b.solve(a).trace();
  const Eigen::VectorXd diff = mean_b - mean_a;
  const double mahal = diff.dot(llt_b.solve(diff));
  double log_det_ratio = 0.0;  // ln det(b) - ln det(a)
  for (Eigen::Index i = 0; i < n; ++i)
    log_det_ratio += 2.0 * (std::log(llt_b.matrixLLT()(i, i)) - std::log(llt_a.matrixLLT()(i, i)));
  return 0.5 * (trace_term - static_cast<double>(n) + mahal + log_det_ratio);
}

double aci_metric(const MomentSeries& filter, const MomentSeries& smoother, std::size_t k,
                  double jitter_scale) {
  if (filter.grid.steps != smoother.grid.steps || filter.dim() != smoother.dim())
    throw std::invalid_argument("aci_metric: series do not match");
  const auto kk = static_cast<Eigen::Index>(k);
  return gaussian_kl(smoother.means.col(kk), smoother.covs[k], filter.means.col(kk),
                     filter.covs[k], jitter_scale);
}

std::vector<double> aci_metric_series(const MomentSeries& filter, const MomentSeries& smoother,
                                      double jitter_scale) {
  std::vector<double> out(filter.grid.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = aci_metric(filter, smoother, k, jitter_scale);
  return out;
}

std::vector<LaggedMoments> lagged_smoother_sweep(const FilterRun& filter, const SdeModel& model,
                                                 const TimeGrid& grid,
                                                 const Trajectory& observations,
                                                 const std::vector<double>& lags,
                                                 const std::vector<std::size_t>& eval_steps,
                                                 const SmootherOptions& opts) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<LaggedMoments> out;
  out.reserve(lags.size());
  for (const double lag : lags) {
    if (lag < 0.0) throw std::invalid_argument("lagged_smoother_sweep: negative lag");
    LaggedMoments lm;
    lm.lag = lag;
    lm.eval_steps = eval_steps;
    lm.means = Eigen::MatrixXd::Constant(model.state_dim, eval_steps.size(), nan);
    lm.covs.assign(eval_steps.size(),
                   Eigen::MatrixXd::Constant(model.state_dim, model.state_dim, nan));
    const auto lag_steps = static_cast<std::size_t>(std::llround(lag / grid.dt));
    for (std::size_t e = 0; e < eval_steps.size(); ++e) {
      const std::size_t k = eval_steps[e];
      if (k > grid.steps) throw std::invalid_argument("lagged_smoother_sweep: eval step off grid");
      const std::size_t k_hi = std::min(k + lag_steps, grid.steps);
      if (k_hi == k) {  // lag 0: the filter itself
        lm.means.col(static_cast<Eigen::Index>(e)) =
            filter.moments.means.col(static_cast<Eigen::Index>(k));
        lm.covs[e] = filter.moments.covs[k];
        continue;
      }
      WindowMoments wm = smoother_window_moments(filter, model, grid, observations, k, k_hi, opts);
      if (wm.diverged_at) continue;  // leave NaN for this (t, L)
      lm.means.col(static_cast<Eigen::Index>(e)) = wm.mean;
      lm.covs[e] = wm.cov;
    }
    out.push_back(std::move(lm));
  }
  return out;
}

std::vector<double> uniform_lags(std::size_t count, double max_lag) {
  if (count < 2 || !(max_lag > 0.0)) throw std::invalid_argument("uniform_lags: bad parameters");
  std::vector<double> lags(count);
  for (std::size_t i = 0; i < count; ++i)
    lags[i] = max_lag * static_cast<double>(i + 1) / static_cast<double>(count);
  return lags;
}

AciCirSeries compute_aci_cir(const FilterRun& filter, const SmootherRun& full_smoother,
                             const SdeModel& model, const TimeGrid& grid,
                             const Trajectory& observations, const CirOptions& cir_opts,
                             const SmootherOptions& smoother_opts) {
  if (cir_opts.lags.empty()) throw std::invalid_argument("compute_aci_cir: no lags");
  if (!(cir_opts.saturation > 0.0 && cir_opts.saturation < 1.0))
    throw std::invalid_argument("compute_aci_cir: saturation must lie in (0,1)");

  std::vector<std::size_t> eval_steps;
  for (std::size_t k = 0; k <= grid.steps; k += std::max<std::size_t>(1, cir_opts.eval_stride))
    eval_steps.push_back(k);

  const auto lagged = lagged_smoother_sweep(filter, model, grid, observations, cir_opts.lags,
                                            eval_steps, smoother_opts);

  AciCirSeries out;
  out.times.resize(eval_steps.size());
  out.metric.resize(eval_steps.size());
  out.cir.resize(eval_steps.size());

  for (std::size_t e = 0; e < eval_steps.size(); ++e) {
    const std::size_t k = eval_steps[e];
    const auto kk = static_cast<Eigen::Index>(k);
    out.times[e] = grid.time(k);
    const double full_gain =
        gaussian_kl(full_smoother.moments.means.col(kk), full_smoother.moments.covs[k],
                    filter.moments.means.col(kk), filter.moments.covs[k], cir_opts.jitter_scale);
    out.metric[e] = full_gain;

    const double horizon = grid.t_end() - grid.time(k);
    if (!(full_gain > cir_opts.noise_floor)) {  // no detectable causal link
      out.cir[e] = 0.0;
      continue;
    }
    const double target = cir_opts.saturation * full_gain;
    double cir_val = horizon;  // the full window always saturates
    for (std::size_t l = 0; l < lagged.size(); ++l) {
      const double lag_capped = std::min(lagged[l].lag, horizon);
      const auto& lm = lagged[l];
      if (!lm.means.col(static_cast<Eigen::Index>(e)).allFinite()) continue;
      const double gain =
          gaussian_kl(lm.means.col(static_cast<Eigen::Index>(e)), lm.covs[e],
                      filter.moments.means.col(kk), filter.moments.covs[k], cir_opts.jitter_scale);
      if (gain >= target) {
        cir_val = lag_capped;
        break;
      }
    }
    out.cir[e] = cir_val;
  }
  return out;
}

}  // namespace enkbs
