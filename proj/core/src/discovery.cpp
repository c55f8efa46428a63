#include "enkbs/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "enkbs/filter.hpp"
#include "enkbs/smoother.hpp"

namespace enkbs {
namespace {

Eigen::Index feature_index(const CandidateLibrary& lib, const std::string& name) {
  const auto it = std::find(lib.names.begin(), lib.names.end(), name);
  if (it == lib.names.end())
    throw std::invalid_argument("candidate library is missing feature " + name);
  return static_cast<Eigen::Index>(it - lib.names.begin());
}

// Features at t_k and increment rates (s_{k+stride} - s_k)/(stride * dt).
// A stride above 1 averages the driving noise over a short window, lifting
// weak drift terms above the sigma^2/dt noise floor of one-step rates.
void build_regression_data(const Eigen::Ref<const Eigen::MatrixXd>& states, double dt,
                           const CandidateLibrary& lib, Eigen::Index stride,
                           Eigen::MatrixXd& features, Eigen::MatrixXd& rates) {
  const Eigen::Index cols = states.cols();
  if (stride < 1) throw std::invalid_argument("discovery: stride must be positive");
  if (cols < stride + 1) throw std::invalid_argument("discovery: need at least two samples");
  const Eigen::Index K = cols - stride;
  features.resize(lib.size(), K);
  lib.evaluate(states.leftCols(K), features);
  rates = (states.rightCols(K) - states.leftCols(K)) / (dt * static_cast<double>(stride));
}

struct GramSystem {
  Eigen::MatrixXd gram;  // M x M, 1/K-normalized
  Eigen::MatrixXd rhs;   // M x N, one column per equation
  Eigen::VectorXd mean_sq;  // per-equation mean squared rate
  bool ridged = false;
};

GramSystem build_gram(const Eigen::MatrixXd& features, const Eigen::MatrixXd& rates) {
  const auto K = static_cast<double>(features.cols());
  GramSystem sys;
  sys.gram.noalias() = features * features.transpose();
  sys.gram /= K;
  sys.rhs.noalias() = features * rates.transpose();
  sys.rhs /= K;
  sys.mean_sq = rates.rowwise().squaredNorm() / K;
  return sys;
}

// Mean squared residual of the constrained/unconstrained solution theta.
double residual_msq(const GramSystem& sys, const Eigen::VectorXd& theta, Eigen::Index eq) {
  return sys.mean_sq[eq] - 2.0 * sys.rhs.col(eq).dot(theta) + theta.dot(sys.gram * theta);
}

// Solves gram * theta = rhs, applying a flagged ridge when the factorization
// is unreliable.
Eigen::VectorXd solve_spd(Eigen::MatrixXd gram, const Eigen::VectorXd& rhs, bool& ridged) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd theta = ldlt.solve(rhs);
    if (theta.allFinite() && (gram * theta - rhs).norm() <= 1e-6 * std::max(rhs.norm(), 1.0))
      return theta;
  }
  ridged = true;
  gram.diagonal().array() += 1e-10 * std::max(gram.trace() / static_cast<double>(gram.rows()), 1.0);
  return gram.ldlt().solve(rhs);
}

double nested_ce(const GramSystem& sys, Eigen::Index eq, Eigen::Index feature, bool& ridged) {
  const Eigen::Index M = sys.gram.rows();
  const Eigen::VectorXd theta_full = solve_spd(sys.gram, sys.rhs.col(eq), ridged);
  const double rss_full = std::max(residual_msq(sys, theta_full, eq), 0.0);

  std::vector<Eigen::Index> keep;
  keep.reserve(M - 1);
  for (Eigen::Index j = 0; j < M; ++j)
    if (j != feature) keep.push_back(j);

  Eigen::MatrixXd sub_gram(M - 1, M - 1);
  Eigen::VectorXd sub_rhs(M - 1);
  for (Eigen::Index a = 0; a < M - 1; ++a) {
    sub_rhs[a] = sys.rhs(keep[a], eq);
    for (Eigen::Index b = 0; b < M - 1; ++b) sub_gram(a, b) = sys.gram(keep[a], keep[b]);
  }
  const Eigen::VectorXd theta_sub = solve_spd(sub_gram, sub_rhs, ridged);
  double rss_sub = sys.mean_sq[eq] - 2.0 * sub_rhs.dot(theta_sub) +
                   theta_sub.dot(sub_gram * theta_sub);
  rss_sub = std::max(rss_sub, 0.0);

  const double tiny = 1e-300;
  const double ce = 0.5 * std::log(std::max(rss_sub, tiny) / std::max(rss_full, tiny));
  return std::max(ce, 0.0);
}

}  // namespace

CandidateLibrary lorenz84_library() {
  CandidateLibrary lib;
  lib.names = {"1", "y", "z", "y2", "z2", "yz", "x", "xy", "xz", "xy2", "xz2", "xyz"};
  lib.constant_index = 0;
  lib.shift_pairs = {{6, 0}, {7, 1}, {8, 2}, {9, 3}, {10, 4}, {11, 5}};  // x*phi -> phi
  lib.evaluate = [](const Eigen::Ref<const Eigen::MatrixXd>& s, Eigen::Ref<Eigen::MatrixXd> f) {
    if (s.rows() != 3) throw std::invalid_argument("lorenz84_library: states must be 3 x B");
    const auto x = s.row(0).array();
    const auto y = s.row(1).array();
    const auto z = s.row(2).array();
    f.row(0).setOnes();
    f.row(1) = y;
    f.row(2) = z;
    f.row(3) = y.square();
    f.row(4) = z.square();
    f.row(5) = y * z;
    f.row(6) = x;
    f.row(7) = x * y;
    f.row(8) = x * z;
    f.row(9) = x * y.square();
    f.row(10) = x * z.square();
    f.row(11) = x * y * z;
  };
  return lib;
}

// Energy conservation of the nonlinear terms, written as an identity over
// the whole library: collecting d/dt (x^2+y^2+z^2)/2 by monomial, every
// quadratic or cubic feature either needs a cancelling partner or is
// forbidden outright. This is what keeps estimated models free of
// finite-time blow-up.
std::vector<LinearConstraint> lorenz84_energy_constraints(const CandidateLibrary& lib) {
  const Eigen::Index y2 = feature_index(lib, "y2");
  const Eigen::Index z2 = feature_index(lib, "z2");
  const Eigen::Index yz = feature_index(lib, "yz");
  const Eigen::Index xy = feature_index(lib, "xy");
  const Eigen::Index xz = feature_index(lib, "xz");
  const Eigen::Index xy2 = feature_index(lib, "xy2");
  const Eigen::Index xz2 = feature_index(lib, "xz2");
  const Eigen::Index xyz = feature_index(lib, "xyz");
  return {
      // Cancelling pairs and the x y z triple.
      {{0, y2, 1.0}, {1, xy, 1.0}},                 // x y^2
      {{0, z2, 1.0}, {2, xz, 1.0}},                 // x z^2
      {{0, yz, 1.0}, {1, xz, 1.0}, {2, xy, 1.0}},   // x y z
      {{1, yz, 1.0}, {2, y2, 1.0}},                 // y^2 z
      {{1, z2, 1.0}, {2, yz, 1.0}},                 // y z^2
      {{1, xyz, 1.0}, {2, xy2, 1.0}},               // x y^2 z
      {{1, xz2, 1.0}, {2, xyz, 1.0}},               // x y z^2
      // Monomials with no partner anywhere in the library.
      {{0, xy, 1.0}},   // x^2 y
      {{0, xz, 1.0}},   // x^2 z
      {{0, xy2, 1.0}},  // x^2 y^2
      {{0, xz2, 1.0}},  // x^2 z^2
      {{0, xyz, 1.0}},  // x^2 y z
      {{1, y2, 1.0}},   // y^3
      {{1, xy2, 1.0}},  // x y^3
      {{2, z2, 1.0}},   // z^3
      {{2, xz2, 1.0}},  // x z^3
  };
}

SdeModel polynomial_sde(const PolynomialModel& model, const CandidateLibrary& lib,
                        const std::vector<Eigen::Index>& hidden_eqs,
                        const std::vector<Eigen::Index>& observed_eqs) {
  const Eigen::Index N = model.theta.rows();
  const auto nh = static_cast<Eigen::Index>(hidden_eqs.size());
  const auto no = static_cast<Eigen::Index>(observed_eqs.size());
  if (nh + no != N || model.sigma.size() != N)
    throw std::invalid_argument("polynomial_sde: partition does not match the model");
  if (model.theta.cols() != lib.size())
    throw std::invalid_argument("polynomial_sde: theta does not match the library");

  struct Shared {
    PolynomialModel model;
    CandidateLibrary lib;
    std::vector<Eigen::Index> hidden, observed;

    void drift(const Eigen::Ref<const Eigen::MatrixXd>& state,
               const Eigen::Ref<const Eigen::VectorXd>& obs,
               const std::vector<Eigen::Index>& rows, Eigen::Ref<Eigen::MatrixXd> out) const {
      const Eigen::Index batch = state.cols();
      const Eigen::Index N_full = model.theta.rows();
      thread_local Eigen::MatrixXd full, feats;
      full.resize(N_full, batch);
      feats.resize(lib.size(), batch);
      for (std::size_t a = 0; a < hidden.size(); ++a)
        full.row(hidden[a]) = state.row(static_cast<Eigen::Index>(a));
      for (std::size_t a = 0; a < observed.size(); ++a)
        full.row(observed[a]).setConstant(obs[static_cast<Eigen::Index>(a)]);
      lib.evaluate(full, feats);
      for (std::size_t a = 0; a < rows.size(); ++a)
        out.row(static_cast<Eigen::Index>(a)).noalias() = model.theta.row(rows[a]) * feats;
    }
  };
  auto shared = std::make_shared<Shared>(Shared{model, lib, hidden_eqs, observed_eqs});

  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(nh, nh);
  for (Eigen::Index a = 0; a < nh; ++a)
    sigma(a, a) = model.sigma[hidden_eqs[a]] * model.sigma[hidden_eqs[a]];
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(no, no);
  for (Eigen::Index a = 0; a < no; ++a)
    gamma(a, a) = model.sigma[observed_eqs[a]] * model.sigma[observed_eqs[a]];

  BatchDrift f = [shared](const Eigen::Ref<const Eigen::MatrixXd>& s,
                          const Eigen::Ref<const Eigen::VectorXd>& y, double,
                          Eigen::Ref<Eigen::MatrixXd> out) { shared->drift(s, y, shared->hidden, out); };
  BatchDrift h = [shared](const Eigen::Ref<const Eigen::MatrixXd>& s,
                          const Eigen::Ref<const Eigen::VectorXd>& y, double,
                          Eigen::Ref<Eigen::MatrixXd> out) {
    shared->drift(s, y, shared->observed, out);
  };
  return make_model(nh, no, std::move(f), std::move(h), std::move(sigma), std::move(gamma));
}

CausationEntropyResult causation_entropy_matrix(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                                double dt, const CandidateLibrary& lib,
                                                Eigen::Index rate_stride) {
  if (states.cols() < 10 * lib.size())
    throw std::invalid_argument("causation_entropy_matrix: too few samples");
  Eigen::MatrixXd features, rates;
  build_regression_data(states, dt, lib, rate_stride, features, rates);
  const GramSystem sys = build_gram(features, rates);

  CausationEntropyResult res;
  res.ce.resize(states.rows(), lib.size());
  for (Eigen::Index i = 0; i < states.rows(); ++i)
    for (Eigen::Index j = 0; j < lib.size(); ++j) res.ce(i, j) = nested_ce(sys, i, j, res.ridged);
  return res;
}

double causation_entropy(const Eigen::Ref<const Eigen::MatrixXd>& features,
                         const Eigen::Ref<const Eigen::VectorXd>& rates, Eigen::Index feature) {
  GramSystem sys = build_gram(features, rates.transpose());
  bool ridged = false;
  return nested_ce(sys, 0, feature, ridged);
}

IndicatorMatrix identify_structure(const Eigen::Ref<const Eigen::MatrixXd>& states, double dt,
                                   const CandidateLibrary& lib, double threshold,
                                   Eigen::Index rate_stride) {
  const CausationEntropyResult res = causation_entropy_matrix(states, dt, lib, rate_stride);
  IndicatorMatrix ind;
  ind.threshold = threshold;
  ind.active = (res.ce.array() >= threshold).cast<int>();
  ind.active.col(lib.constant_index).setOnes();
  return ind;
}

PolynomialModel estimate_params(const Eigen::Ref<const Eigen::MatrixXd>& states, double dt,
                                const CandidateLibrary& lib, const IndicatorMatrix& structure,
                                const std::vector<LinearConstraint>& constraints,
                                const EstimateOptions& opts) {
  const Eigen::Index N = states.rows();
  const Eigen::Index M = lib.size();
  if (structure.active.rows() != N || structure.active.cols() != M)
    throw std::invalid_argument("estimate_params: structure shape mismatch");

  Eigen::MatrixXd features, rates;
  build_regression_data(states, dt, lib, 1, features, rates);
  const GramSystem sys = build_gram(features, rates);

  // Map active (equation, feature) entries into one unknown vector.
  Eigen::MatrixXi slot = Eigen::MatrixXi::Constant(N, M, -1);
  Eigen::Index unknowns = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < M; ++j)
      if (structure.active(i, j) != 0) slot(i, j) = static_cast<int>(unknowns++);
  if (unknowns == 0) throw std::invalid_argument("estimate_params: empty structure");

  // Block-diagonal normal equations over active coefficients.
  Eigen::MatrixXd big_gram = Eigen::MatrixXd::Zero(unknowns, unknowns);
  Eigen::VectorXd big_rhs = Eigen::VectorXd::Zero(unknowns);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < M; ++j) {
      if (slot(i, j) < 0) continue;
      big_rhs[slot(i, j)] = sys.rhs(j, i);
      for (Eigen::Index l = 0; l < M; ++l)
        if (slot(i, l) >= 0) big_gram(slot(i, j), slot(i, l)) = sys.gram(j, l);
    }
  }

  // Constraint rows; terms on inactive coefficients contribute zero.
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& constraint : constraints) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(unknowns);
    bool any = false;
    for (const auto& term : constraint) {
      if (term.equation < 0 || term.equation >= N || term.feature < 0 || term.feature >= M)
        throw std::invalid_argument("estimate_params: constraint term out of range");
      if (slot(term.equation, term.feature) >= 0) {
        row[slot(term.equation, term.feature)] += term.weight;
        any = true;
      }
    }
    if (any) rows.push_back(std::move(row));
  }
  const auto C = static_cast<Eigen::Index>(rows.size());

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(unknowns + C, unknowns + C);
  kkt.topLeftCorner(unknowns, unknowns) = big_gram;
  for (Eigen::Index c = 0; c < C; ++c) {
    kkt.block(unknowns + c, 0, 1, unknowns) = rows[static_cast<std::size_t>(c)];
    kkt.block(0, unknowns + c, unknowns, 1) = rows[static_cast<std::size_t>(c)].transpose();
  }
  Eigen::VectorXd kkt_rhs = Eigen::VectorXd::Zero(unknowns + C);
  kkt_rhs.head(unknowns) = big_rhs;

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible())
    throw std::invalid_argument("estimate_params: system is underdetermined or infeasible");
  const Eigen::VectorXd solution = lu.solve(kkt_rhs);

  PolynomialModel model;
  model.theta = Eigen::MatrixXd::Zero(N, M);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < M; ++j)
      if (slot(i, j) >= 0) model.theta(i, j) = solution[slot(i, j)];

  // Exact projection on the active-restricted constraints: single active
  // terms are zeroed outright, two-term unit-weight pairs hold bit-level.
  for (const auto& constraint : constraints) {
    std::vector<const ConstraintTerm*> active;
    for (const auto& term : constraint)
      if (slot(term.equation, term.feature) >= 0) active.push_back(&term);
    if (active.size() == 1) {
      model.theta(active[0]->equation, active[0]->feature) = 0.0;
    } else if (active.size() == 2 && active[0]->weight == 1.0 && active[1]->weight == 1.0) {
      const double v = 0.5 * (model.theta(active[0]->equation, active[0]->feature) -
                              model.theta(active[1]->equation, active[1]->feature));
      model.theta(active[0]->equation, active[0]->feature) = v;
      model.theta(active[1]->equation, active[1]->feature) = -v;
    }
  }

  // Noise amplitudes from the residual quadratic variation unless fixed.
  model.sigma.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (opts.fixed_sigma.size() == N && std::isfinite(opts.fixed_sigma[i])) {
      model.sigma[i] = opts.fixed_sigma[i];
      continue;
    }
    const Eigen::VectorXd theta_i = model.theta.row(i).transpose();
    const double msq = std::max(residual_msq(sys, theta_i, i), 0.0);
    model.sigma[i] = std::sqrt(dt * msq);
  }
  return model;
}

namespace {

PolynomialModel apply_hidden_shift(const PolynomialModel& model, const CandidateLibrary& lib,
                                   double shift) {
  PolynomialModel out = model;
  for (const auto& pair : lib.shift_pairs)
    for (Eigen::Index i = 0; i < model.theta.rows(); ++i)
      out.theta(i, pair.base_feature) -= shift * model.theta(i, pair.x_feature);
  return out;
}

double coefficient_l1(const PolynomialModel& model) { return model.theta.cwiseAbs().sum(); }

}  // namespace

PolynomialModel canonicalize_hidden_shift(const PolynomialModel& model,
                                          const CandidateLibrary& lib) {
  if (lib.shift_pairs.empty()) return model;

  // The L1 norm is piecewise linear in the shift; its minimum sits at a
  // breakpoint where some transformed coefficient crosses zero.
  std::vector<double> candidates{0.0};
  for (const auto& pair : lib.shift_pairs) {
    for (Eigen::Index i = 0; i < model.theta.rows(); ++i) {
      const double slope = model.theta(i, pair.x_feature);
      if (std::abs(slope) < 1e-10) continue;
      candidates.push_back(model.theta(i, pair.base_feature) / slope);
    }
  }

  double best_shift = 0.0;
  double best_l1 = coefficient_l1(model);
  for (const double c : candidates) {
    if (!std::isfinite(c)) continue;
    const double l1 = coefficient_l1(apply_hidden_shift(model, lib, c));
    if (l1 < best_l1 - 1e-12 * std::max(best_l1, 1.0) ||
        (l1 <= best_l1 + 1e-12 * std::max(best_l1, 1.0) && std::abs(c) < std::abs(best_shift))) {
      best_l1 = l1;
      best_shift = c;
    }
  }
  if (best_shift == 0.0) return model;
  PolynomialModel out = apply_hidden_shift(model, lib, best_shift);
  // Snap exact zeros at the chosen breakpoint.
  for (const auto& pair : lib.shift_pairs)
    for (Eigen::Index i = 0; i < out.theta.rows(); ++i)
      if (std::abs(out.theta(i, pair.base_feature)) <
          1e-9 * std::max(1.0, std::abs(model.theta(i, pair.x_feature))))
        out.theta(i, pair.base_feature) = 0.0;
  return out;
}

HiddenSample sample_hidden(const PolynomialModel& model, const CandidateLibrary& lib,
                           const std::vector<Eigen::Index>& hidden_eqs,
                           const std::vector<Eigen::Index>& observed_eqs,
                           const Eigen::Ref<const Eigen::MatrixXd>& observed, const TimeGrid& grid,
                           Eigen::Index ensemble_size, const NoiseStream& noise, bool use_mean,
                           double init_spread) {
  HiddenSample out;
  if (hidden_eqs.empty()) return out;  // fully observed: nothing to sample
  if (ensemble_size < 5) throw std::invalid_argument("sample_hidden: ensemble too small");

  const SdeModel sde = polynomial_sde(model, lib, hidden_eqs, observed_eqs);
  Trajectory obs;
  obs.grid = grid;
  obs.values = observed;

  const auto nh = static_cast<Eigen::Index>(hidden_eqs.size());
  Eigen::MatrixXd init(nh, ensemble_size);
  noise.fill_gaussian_matrix(NoiseTag::EnsembleInit, 0, init);
  init *= init_spread;

  const FilterRun frun = run_filter(sde, grid, obs, init, noise);
  if (!frun.ok()) {
    out.diverged_at = frun.diverged_at;
    return out;
  }
  const SmootherRun srun = run_smoother(frun, sde, grid, obs);
  if (!srun.ok()) {
    out.diverged_at = srun.diverged_at;
    return out;
  }

  out.mean = srun.moments.means;
  if (use_mean) {
    out.member = srun.moments.means;
  } else {
    out.member.resize(nh, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t k = 0; k <= grid.steps; ++k)
      out.member.col(static_cast<Eigen::Index>(k)) = srun.members[k].col(0);
  }
  return out;
}

const PolynomialModel& LearnState::final_model() const {
  for (auto it = iterations.rbegin(); it != iterations.rend(); ++it)
    if (!it->diverged) return it->model;
  throw std::logic_error("LearnState: no completed iteration");
}

LearnState learn(const Eigen::Ref<const Eigen::MatrixXd>& observed, const TimeGrid& grid,
                 const CandidateLibrary& lib, const PolynomialModel& initial,
                 const std::vector<Eigen::Index>& hidden_eqs,
                 const std::vector<Eigen::Index>& observed_eqs,
                 const std::vector<LinearConstraint>& constraints, const EstimateOptions& est_opts,
                 const NoiseStream& noise, const LearnOptions& opts) {
  if (observed.cols() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("learn: observed data does not match the grid");
  const Eigen::Index N = initial.theta.rows();

  LearnState state;
  PolynomialModel current = initial;

  Eigen::MatrixXd completed(N, observed.cols());
  for (std::size_t a = 0; a < observed_eqs.size(); ++a)
    completed.row(observed_eqs[a]) = observed.row(static_cast<Eigen::Index>(a));

  for (std::size_t it = 0; it < opts.iterations; ++it) {
    const NoiseStream iter_noise = noise.fork(it);

    HiddenSample sample =
        sample_hidden(current, lib, hidden_eqs, observed_eqs, observed, grid, opts.ensemble_size,
                      iter_noise, opts.sample_mean, opts.init_spread);
    bool restarted = false;
    if (sample.diverged_at) {
      // One noise-perturbed retry with the same data before giving up.
      PolynomialModel perturbed = current;
      const NoiseStream retry_noise = iter_noise.fork(0x9E37u);
      const Eigen::VectorXd xi =
          retry_noise.gaussians(NoiseTag::Generic, 0, it, perturbed.theta.size());
      Eigen::Index idx = 0;
      for (Eigen::Index i = 0; i < perturbed.theta.rows(); ++i)
        for (Eigen::Index j = 0; j < perturbed.theta.cols(); ++j, ++idx)
          perturbed.theta(i, j) += 0.01 * std::max(std::abs(perturbed.theta(i, j)), 0.1) * xi[idx];
      sample = sample_hidden(perturbed, lib, hidden_eqs, observed_eqs, observed, grid,
                             opts.ensemble_size, retry_noise, opts.sample_mean, opts.init_spread);
      restarted = true;
      if (sample.diverged_at) {
        state.aborted = true;
        state.abort_reason = "sampling diverged twice at iteration " + std::to_string(it);
        LearnIteration failed;
        failed.model = current;
        failed.diverged = true;
        failed.restarted = true;
        state.iterations.push_back(std::move(failed));
        break;
      }
    }

    for (std::size_t a = 0; a < hidden_eqs.size(); ++a)
      completed.row(hidden_eqs[a]) = sample.member.row(static_cast<Eigen::Index>(a));

    LearnIteration record;
    record.restarted = restarted;
    record.structure =
        identify_structure(completed, grid.dt, lib, opts.ce_threshold, opts.ce_rate_stride);
    record.model = estimate_params(completed, grid.dt, lib, record.structure, constraints, est_opts);
    // Hidden-shift gauge freedom: equivalent models differ by a constant
    // shift of the sampled variable; carry the sparsest representative.
    record.model = canonicalize_hidden_shift(record.model, lib);
    current = record.model;
    state.iterations.push_back(std::move(record));
    state.last_sample = sample.member;
  }

  // C_stable is the structure the loop settles on: the latest matrix repeated
  // on consecutive iterations. The Frobenius diagnostic is filled
  // retroactively against it.
  for (std::size_t it = state.iterations.size(); it-- > 1;) {
    if (state.iterations[it].diverged || state.iterations[it - 1].diverged) continue;
    const auto& cur = state.iterations[it].structure.active;
    const auto& prev = state.iterations[it - 1].structure.active;
    if (cur.size() == prev.size() && (cur.array() == prev.array()).all()) {
      state.stable_structure = cur;
      break;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& rec : state.iterations) {
    if (!state.stable_structure || rec.diverged) {
      rec.structure_error = nan;
      continue;
    }
    rec.structure_error =
        (rec.structure.active - *state.stable_structure).cast<double>().norm();
  }
  return state;
}

}  // namespace enkbs
