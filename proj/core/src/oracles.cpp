#include "enkbs/oracles.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace enkbs {
namespace {

void require_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) throw std::invalid_argument(std::string(what) + ": bad shape");
}

}  // namespace

MomentSeries kalman_bucy_moments(const LinearModel& lm, const TimeGrid& grid,
                                 const Trajectory& observations, const Eigen::VectorXd& mean0,
                                 const Eigen::MatrixXd& cov0) {
  const Eigen::Index n = lm.F.rows();
  const Eigen::Index p = lm.H.rows();
  require_square(lm.F, n, "kalman_bucy_moments: F");
  require_square(lm.Sigma, n, "kalman_bucy_moments: Sigma");
  require_square(lm.Gamma, p, "kalman_bucy_moments: Gamma");
  if (lm.H.cols() != n) throw std::invalid_argument("kalman_bucy_moments: H shape");
  if (observations.dim() != p ||
      observations.values.cols() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("kalman_bucy_moments: observations do not match the grid");

  const Eigen::LDLT<Eigen::MatrixXd> gamma_ldlt(lm.Gamma);
  if (gamma_ldlt.info() != Eigen::Success)
    throw std::invalid_argument("kalman_bucy_moments: Gamma not factorizable");
  const Eigen::MatrixXd gamma_inv_H = gamma_ldlt.solve(lm.H);  // Gamma^{-1} H

  const double tau = grid.dt;
  MomentSeries out;
  out.grid = grid;
  out.tag = MomentTag::Filter;
  out.means.resize(n, static_cast<Eigen::Index>(grid.size()));
  out.covs.assign(grid.size(), Eigen::MatrixXd());

  Eigen::VectorXd mean = mean0;
  Eigen::MatrixXd cov = cov0;
  out.means.col(0) = mean;
  out.covs[0] = cov;

  for (std::size_t k = 0; k < grid.steps; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd dy = observations.values.col(kk + 1) - observations.values.col(kk);
    const Eigen::MatrixXd gain = cov * gamma_inv_H.transpose();  // P H^T Gamma^{-1}

    mean += tau * (lm.F * mean) + gain * (dy - tau * (lm.H * mean));
    Eigen::MatrixXd dot = lm.F * cov + cov * lm.F.transpose() + lm.Sigma -
                          gain * lm.Gamma * gain.transpose();
    cov += tau * dot;
    cov = 0.5 * (cov + cov.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (!cov.allFinite() || llt.info() != Eigen::Success)
      throw DivergenceError("kalman_bucy_moments: covariance lost positive definiteness", k + 1);

    out.means.col(kk + 1) = mean;
    out.covs[k + 1] = cov;
  }
  return out;
}

MomentSeries rts_moments(const LinearModel& lm, const MomentSeries& filter) {
  const Eigen::Index n = lm.F.rows();
  const std::size_t K = filter.grid.steps;
  if (filter.dim() != n) throw std::invalid_argument("rts_moments: filter dimension mismatch");

  const double tau = filter.grid.dt;
  MomentSeries out;
  out.grid = filter.grid;
  out.tag = MomentTag::Smoother;
  out.means.resize(n, filter.means.cols());
  out.covs.assign(K + 1, Eigen::MatrixXd());

  Eigen::VectorXd mean = filter.means.col(static_cast<Eigen::Index>(K));
  Eigen::MatrixXd cov = filter.covs[K];
  out.means.col(static_cast<Eigen::Index>(K)) = mean;
  out.covs[K] = cov;

  for (std::size_t k = K; k-- > 0;) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::MatrixXd& pf = filter.covs[k + 1];
    const Eigen::LDLT<Eigen::MatrixXd> pf_ldlt(pf);
    if (pf_ldlt.info() != Eigen::Success)
      throw DivergenceError("rts_moments: singular filter covariance", k + 1);
    const Eigen::MatrixXd sig_pf_inv = lm.Sigma * pf_ldlt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd closure = lm.F + sig_pf_inv;  // F + Sigma P_f^{-1}

    const Eigen::VectorXd mean_dot =
        lm.F * mean + sig_pf_inv * (mean - filter.means.col(kk + 1));
    const Eigen::MatrixXd cov_dot =
        closure * cov + cov * closure.transpose() - lm.Sigma;

    mean -= tau * mean_dot;
    cov -= tau * cov_dot;
    cov = 0.5 * (cov + cov.transpose()).eval();
    if (!mean.allFinite() || !cov.allFinite())
      throw DivergenceError("rts_moments: backward integration diverged", k);

    out.means.col(kk) = mean;
    out.covs[k] = cov;
  }
  return out;
}

OracleMoments cgns_dyad_moments(const DyadConfig& cfg, const Trajectory& u_obs,
                                const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0) {
  const TimeGrid& grid = u_obs.grid;
  const std::size_t K = grid.steps;
  if (u_obs.dim() != 1) throw std::invalid_argument("cgns_dyad_moments: u must be scalar");

  const double tau = grid.dt;
  const double c = cfg.coupling;
  const double su2 = cfg.sigma_u * cfg.sigma_u;
  const double sv2 = cfg.sigma_v * cfg.sigma_v;

  OracleMoments out;
  out.filter.grid = grid;
  out.filter.tag = MomentTag::Filter;
  out.filter.means.resize(1, static_cast<Eigen::Index>(grid.size()));
  out.filter.covs.assign(grid.size(), Eigen::MatrixXd(1, 1));
  out.smoother = out.filter;
  out.smoother.tag = MomentTag::Smoother;

  double mu = mean0[0];
  double var = cov0(0, 0);
  out.filter.means(0, 0) = mu;
  out.filter.covs[0](0, 0) = var;

  // Forward conditional-Gaussian filter driven by du.
  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double u = u_obs.values(0, kk);
    const double du = u_obs.values(0, kk + 1) - u;
    const double obs_coef = c * u;  // coefficient of v in the u-drift

    const double gain = var * obs_coef / su2;
    const double predicted_du = ((-cfg.d_u + c * mu) * u + cfg.f_u) * tau;
    mu += tau * (-cfg.d_v * mu - c * u * u + cfg.f_v) + gain * (du - predicted_du);
    var += tau * (-2.0 * cfg.d_v * var + sv2 - (var * obs_coef) * (var * obs_coef) / su2);
    var = std::max(var, 1e-14);

    out.filter.means(0, kk + 1) = mu;
    out.filter.covs[k + 1](0, 0) = var;
  }

  // Backward RTS-form smoother with hidden-block coefficient -d_v.
  double mu_s = out.filter.means(0, static_cast<Eigen::Index>(K));
  double var_s = out.filter.covs[K](0, 0);
  out.smoother.means(0, static_cast<Eigen::Index>(K)) = mu_s;
  out.smoother.covs[K](0, 0) = var_s;

  for (std::size_t k = K; k-- > 0;) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double u_next = u_obs.values(0, kk + 1);
    const double mu_f = out.filter.means(0, kk + 1);
    const double var_f = out.filter.covs[k + 1](0, 0);
    const double pull = sv2 / var_f;

    const double mean_dot = -cfg.d_v * mu_s - c * u_next * u_next + cfg.f_v + pull * (mu_s - mu_f);
    const double var_dot = 2.0 * (-cfg.d_v + pull) * var_s - sv2;
    mu_s -= tau * mean_dot;
    var_s -= tau * var_dot;
    var_s = std::max(var_s, 1e-14);

    out.smoother.means(0, kk) = mu_s;
    out.smoother.covs[k](0, 0) = var_s;
  }
  return out;
}

OracleMoments particle_ffbs(const SdeModel& model, const TimeGrid& grid,
                            const Trajectory& observations, const Eigen::VectorXd& mean0,
                            const Eigen::MatrixXd& cov0, Eigen::Index particles,
                            const NoiseStream& noise) {
  model.validate();
  const Eigen::Index n = model.state_dim;
  const Eigen::Index N = particles;
  const std::size_t K = grid.steps;
  if (N < 1) throw std::invalid_argument("particle_ffbs: needs at least one particle");
  if (observations.values.cols() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("particle_ffbs: observations do not match the grid");

  const double tau = grid.dt;
  const double sqrt_tau = std::sqrt(tau);
  const Eigen::LDLT<Eigen::MatrixXd> gamma_ldlt(model.gamma);
  const Eigen::MatrixXd sigma_tau = tau * model.sigma;  // transition covariance
  const Eigen::LDLT<Eigen::MatrixXd> sigma_tau_ldlt(sigma_tau);
  const Eigen::MatrixXd cov0_sqrt = spd_sqrt(cov0);

  // Full particle and weight histories for the backward pass. weights.col(k)
  // holds the post-update weights used by the backward recursion (the
  // emission of x_k is the increment dy_{k+1}); the reported filter moments
  // at t_k use the pre-update weights, i.e. data through t_k only.
  std::vector<Eigen::MatrixXd> states(K + 1, Eigen::MatrixXd(n, N));
  Eigen::MatrixXd weights(N, static_cast<Eigen::Index>(K + 1));

  for (Eigen::Index j = 0; j < N; ++j)
    states[0].col(j) =
        mean0 + cov0_sqrt * noise.gaussians(NoiseTag::ParticleInit, static_cast<std::uint64_t>(j),
                                            0, n);

  auto weighted_moments = [](const Eigen::MatrixXd& x, const Eigen::VectorXd& wv,
                             Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    mean = x * wv;
    const Eigen::MatrixXd anom = x.colwise() - mean;
    cov = anom * wv.asDiagonal() * anom.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
  };

  OracleMoments out;
  out.filter.grid = grid;
  out.filter.tag = MomentTag::Filter;
  out.filter.means.resize(n, static_cast<Eigen::Index>(grid.size()));
  out.filter.covs.assign(grid.size(), Eigen::MatrixXd());
  out.smoother = out.filter;
  out.smoother.tag = MomentTag::Smoother;

  Eigen::MatrixXd drift(n, N), h_vals(model.obs_dim, N), xi(n, N);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(N, 1.0 / static_cast<double>(N));
  Eigen::VectorXd mean(n);
  Eigen::MatrixXd cov(n, n);

  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd y_k = observations.values.col(kk);
    const Eigen::VectorXd dy = observations.values.col(kk + 1) - y_k;
    const double t = grid.time(k);

    weighted_moments(states[k], w, mean, cov);
    out.filter.means.col(kk) = mean;
    out.filter.covs[k] = cov;

    // Weight by the likelihood of the observed increment: dy ~ N(tau h(x_k), tau Gamma).
    model.obs_drift(states[k], y_k, t, h_vals);
    Eigen::VectorXd log_like(N);
    for (Eigen::Index j = 0; j < N; ++j) {
      const Eigen::VectorXd resid = dy - tau * h_vals.col(j);
      log_like[j] = -0.5 * resid.dot(gamma_ldlt.solve(resid)) / tau;
    }
    log_like.array() += w.array().log();
    const double max_log = log_like.maxCoeff();
    w = (log_like.array() - max_log).exp();
    w /= w.sum();

    const double ess = 1.0 / w.squaredNorm();
    if (ess < 10.0)
      throw DivergenceError("particle_ffbs: effective sample size collapsed (ESS=" +
                                std::to_string(ess) + ")",
                            k);

    // Systematic resampling keeps particle support healthy.
    if (ess < 0.5 * static_cast<double>(N)) {
      const double u0 = noise.uniform01(NoiseTag::ParticleResample, 0, k);
      Eigen::MatrixXd resampled(n, N);
      double cum = w[0];
      Eigen::Index i = 0;
      for (Eigen::Index j = 0; j < N; ++j) {
        const double target = (static_cast<double>(j) + u0) / static_cast<double>(N);
        while (cum < target && i + 1 < N) cum += w[++i];
        resampled.col(j) = states[k].col(i);
      }
      states[k] = std::move(resampled);
      w.setConstant(1.0 / static_cast<double>(N));
    }
    weights.col(kk) = w;

    model.signal_drift(states[k], y_k, t, drift);
    noise.fill_gaussian_matrix(NoiseTag::ParticleSignal, k, xi);
    states[k + 1] = states[k] + tau * drift + sqrt_tau * (model.sigma_sqrt * xi);
  }
  weights.col(static_cast<Eigen::Index>(K)) = w;
  weighted_moments(states[K], w, mean, cov);
  out.filter.means.col(static_cast<Eigen::Index>(K)) = mean;
  out.filter.covs[K] = cov;

  // Backward marginal-smoothing recursion over the stored clouds.
  Eigen::VectorXd smooth_w = weights.col(static_cast<Eigen::Index>(K));
  weighted_moments(states[K], smooth_w, mean, cov);
  out.smoother.means.col(static_cast<Eigen::Index>(K)) = mean;
  out.smoother.covs[K] = cov;

  Eigen::MatrixXd trans(N, N);  // trans(i, j) = p(x_{k+1}^j | x_k^i)
  Eigen::VectorXd denom(N), bridge(N);
  for (std::size_t k = K; k-- > 0;) {
    const Eigen::VectorXd y_k = observations.values.col(static_cast<Eigen::Index>(k));
    model.signal_drift(states[k], y_k, grid.time(k), drift);
    const Eigen::MatrixXd pred = states[k] + tau * drift;  // transition means

    if (n == 1) {
      const double inv_two_var = 0.5 / sigma_tau(0, 0);
      auto next = states[k + 1].row(0).transpose().array();
      auto mu = pred.row(0).transpose().array();
      for (Eigen::Index i = 0; i < N; ++i)
        trans.row(i) = (-(next - mu[i]).square() * inv_two_var).exp().matrix().transpose();
    } else {
      for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < N; ++j) {
          const Eigen::VectorXd d = states[k + 1].col(j) - pred.col(i);
          trans(i, j) = std::exp(-0.5 * d.dot(sigma_tau_ldlt.solve(d)));
        }
      }
    }

    const Eigen::VectorXd w_f = weights.col(static_cast<Eigen::Index>(k));
    denom.noalias() = trans.transpose() * w_f;
    bridge = smooth_w.cwiseQuotient(denom.cwiseMax(1e-300));
    smooth_w = w_f.cwiseProduct(trans * bridge);
    const double total = smooth_w.sum();
    if (!(total > 0.0) || !smooth_w.allFinite())
      throw DivergenceError("particle_ffbs: backward weights degenerated", k);
    smooth_w /= total;

    weighted_moments(states[k], smooth_w, mean, cov);
    out.smoother.means.col(static_cast<Eigen::Index>(k)) = mean;
    out.smoother.covs[k] = cov;
  }
  return out;
}

double rmse(const Eigen::Ref<const Eigen::MatrixXd>& means, const Trajectory& truth, double t_lo,
            double t_hi) {
  const TimeGrid& grid = truth.grid;
  if (means.cols() != truth.values.cols() || means.rows() != truth.dim())
    throw std::invalid_argument("rmse: estimate and truth shapes differ");
  if (!(t_hi >= t_lo)) throw std::invalid_argument("rmse: empty window");
  const std::size_t k_lo = grid.index_at(t_lo);
  const std::size_t k_hi = grid.index_at(t_hi);
  if (k_hi < k_lo) throw std::invalid_argument("rmse: empty window");

  double acc = 0.0;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    acc += (means.col(kk) - truth.values.col(kk)).squaredNorm();
  }
  const double count = static_cast<double>(k_hi - k_lo + 1) * static_cast<double>(truth.dim());
  return std::sqrt(acc / count);
}

double rmse(const MomentSeries& estimate, const Trajectory& truth, double t_lo, double t_hi) {
  return rmse(estimate.means, truth, t_lo, t_hi);
}

}  // namespace enkbs
