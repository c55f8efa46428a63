#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "enkbs/noise.hpp"
#include "enkbs/sde.hpp"

namespace enkbs {

// Ordered scalar feature functions of the full system state. evaluate() fills
// one row per feature for a batch of state columns. The constant feature must
// be present (it is forced into every identified structure).
struct CandidateLibrary {
  std::vector<std::string> names;
  std::function<void(const Eigen::Ref<const Eigen::MatrixXd>& states,
                     Eigen::Ref<Eigen::MatrixXd> features)>
      evaluate;
  Eigen::Index constant_index = 0;

  // Pairs (x*phi, phi) for libraries linear in an unobserved variable x.
  // Shifting x by a constant maps theta[x*phi] into theta[phi]; these pairs
  // define that reparameterization (see canonicalize_hidden_shift).
  struct ShiftPair {
    Eigen::Index x_feature = 0;
    Eigen::Index base_feature = 0;
  };
  std::vector<ShiftPair> shift_pairs;

  Eigen::Index size() const { return static_cast<Eigen::Index>(names.size()); }
};

// 1, y, z, y^2, z^2, yz, x, xy, xz, xy^2, xz^2, xyz on states ordered (x, y, z).
CandidateLibrary lorenz84_library();

// Binary active-term matrix C (one row per state equation).
struct IndicatorMatrix {
  Eigen::MatrixXi active;  // N x M, entries in {0, 1}
  double threshold = 1e-3;
};

// Linear equality constraint sum_t weight_t * theta(eq_t, feat_t) = 0.
struct ConstraintTerm {
  Eigen::Index equation = 0;
  Eigen::Index feature = 0;
  double weight = 1.0;
};
using LinearConstraint = std::vector<ConstraintTerm>;

// Quadratic-energy cancellations of the Lorenz-84 structure:
// theta^x_{y2} + theta^y_{xy} = 0, theta^x_{z2} + theta^z_{xz} = 0,
// theta^y_{xz} + theta^z_{xy} = 0.
std::vector<LinearConstraint> lorenz84_energy_constraints(const CandidateLibrary& lib);

// Coefficient table + per-equation noise amplitudes defining a polynomial
// drift model over a library.
struct PolynomialModel {
  Eigen::MatrixXd theta;  // N x M, zero at inactive entries
  Eigen::VectorXd sigma;  // N noise amplitudes
};

// Rows of theta are full-state equations, some hidden, some observed. Builds
// the SdeModel whose signal drift covers the hidden equations and observation
// drift the observed ones.
SdeModel polynomial_sde(const PolynomialModel& model, const CandidateLibrary& lib,
                        const std::vector<Eigen::Index>& hidden_eqs,
                        const std::vector<Eigen::Index>& observed_eqs);

// --------------------------------------------------------------------------
// Causation entropy via the Gaussian residual-variance closure:
// CE_{i,j} = 0.5 ln(RSS_{-j} / RSS_full) for the regression of the Euler
// increment rate of equation i on the library features. Nonnegative by
// least-squares nesting.
struct CausationEntropyResult {
  Eigen::MatrixXd ce;  // N x M
  bool ridged = false; // rank-deficient Gram matrix was ridge-regularized
};
CausationEntropyResult causation_entropy_matrix(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                                double dt, const CandidateLibrary& lib,
                                                Eigen::Index rate_stride = 1);

// Low-level variant on precomputed features/rates (one equation).
double causation_entropy(const Eigen::Ref<const Eigen::MatrixXd>& features,
                         const Eigen::Ref<const Eigen::VectorXd>& rates, Eigen::Index feature);

// Thresholded indicator with the constant column forced active.
IndicatorMatrix identify_structure(const Eigen::Ref<const Eigen::MatrixXd>& states, double dt,
                                   const CandidateLibrary& lib, double threshold = 1e-3,
                                   Eigen::Index rate_stride = 1);

// --------------------------------------------------------------------------
// Equality-constrained least squares on Euler increment rates, jointly across
// the equations the constraints couple. Noise amplitudes of equations without
// a fixed value are re-estimated from the residual quadratic variation
// (sigma^2 = dt * mean squared rate residual).
struct EstimateOptions {
  // Per-equation fixed noise amplitude; NaN entries are estimated.
  Eigen::VectorXd fixed_sigma;
};
PolynomialModel estimate_params(const Eigen::Ref<const Eigen::MatrixXd>& states, double dt,
                                const CandidateLibrary& lib, const IndicatorMatrix& structure,
                                const std::vector<LinearConstraint>& constraints,
                                const EstimateOptions& opts = {});

// --------------------------------------------------------------------------
// Gauge fixing. A model whose library is linear in the hidden variable is
// only identifiable up to a constant shift of that variable: x -> x + c with
// theta[phi] -> theta[phi] - c * theta[x*phi] leaves the observed-data
// likelihood unchanged. Among those equivalent models this picks the one
// with the smallest coefficient L1 norm, i.e. the sparsest representation (a
// no-op when the L1 optimum is the current gauge).
PolynomialModel canonicalize_hidden_shift(const PolynomialModel& model,
                                          const CandidateLibrary& lib);

// --------------------------------------------------------------------------
// Conditional sampling: filter + smoother under the current model, returning
// one member trajectory (the synthetic hidden record) and the smoother mean.
struct HiddenSample {
  Eigen::MatrixXd member;  // n_hidden x (K+1)
  Eigen::MatrixXd mean;
  std::optional<std::size_t> diverged_at;
};
HiddenSample sample_hidden(const PolynomialModel& model, const CandidateLibrary& lib,
                           const std::vector<Eigen::Index>& hidden_eqs,
                           const std::vector<Eigen::Index>& observed_eqs,
                           const Eigen::Ref<const Eigen::MatrixXd>& observed, const TimeGrid& grid,
                           Eigen::Index ensemble_size, const NoiseStream& noise,
                           bool use_mean = false, double init_spread = 0.1);

// --------------------------------------------------------------------------
// The iterative loop: conditional sampling -> structure identification ->
// constrained parameter estimation, rebuilding the model each pass.
struct LearnOptions {
  std::size_t iterations = 120;
  Eigen::Index ensemble_size = 50;
  double ce_threshold = 1e-3;
  // Increment aggregation for the structure-identification regressions; the
  // parameter estimate itself stays on one-step rates.
  Eigen::Index ce_rate_stride = 10;
  bool sample_mean = false;   // use the smoother mean instead of member 0
  double init_spread = 0.1;
};

struct LearnIteration {
  IndicatorMatrix structure;
  PolynomialModel model;
  double structure_error = 0.0;  // ||C - C_stable||_F, filled retroactively
  bool diverged = false;
  bool restarted = false;
};

struct LearnState {
  std::vector<LearnIteration> iterations;
  std::optional<Eigen::MatrixXi> stable_structure;
  Eigen::MatrixXd last_sample;  // hidden trajectory from the final iteration
  bool aborted = false;
  std::string abort_reason;

  const PolynomialModel& final_model() const;
};

LearnState learn(const Eigen::Ref<const Eigen::MatrixXd>& observed, const TimeGrid& grid,
                 const CandidateLibrary& lib, const PolynomialModel& initial,
                 const std::vector<Eigen::Index>& hidden_eqs,
                 const std::vector<Eigen::Index>& observed_eqs,
                 const std::vector<LinearConstraint>& constraints, const EstimateOptions& est_opts,
                 const NoiseStream& noise, const LearnOptions& opts = {});

}  // namespace enkbs
