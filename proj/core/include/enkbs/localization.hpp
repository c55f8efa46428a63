#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace enkbs {

/// Gaspari-Cohn fifth-order piecewise rational taper; compactly supported on
/// [0, 2], continuous, values in [0, 1]. Rejects negative arguments.
double gaspari_cohn(double r);

/// Ring distance min(|i-j|, n-|i-j|) between 0-based lattice indices.
double periodic_distance(std::size_t i, std::size_t j, std::size_t n);

// Taper matrix (C_loc)_{ij} = G(d(i,j)/r0). Entries vanish for d > 2 r0.
struct LocalizationMatrix {
  Eigen::MatrixXd taper;
  double radius = 0.0;
  // Spectral diagnostic from construction. The kernel is positive definite
  // on the line, but its periodization loses definiteness once the support
  // 2 r0 wraps most of the ring (e.g. n = 40 with r0 >= 15), so `psd` is a
  // report, not a precondition for running.
  double min_eigenvalue = 0.0;
  bool psd = true;

  // Sub-block for mapped index sets (e.g. hidden rows vs observed columns of
  // a lattice model, both addressed by their physical lattice sites).
  Eigen::MatrixXd block(const std::vector<Eigen::Index>& rows,
                        const std::vector<Eigen::Index>& cols) const;
};

using DistanceFn = std::function<double(std::size_t, std::size_t)>;

// Builds the taper and checks positive semidefiniteness at construction
// (smallest eigenvalue >= -1e-8 * n, recorded on the result).
LocalizationMatrix build_localization(std::size_t n, double r0, const DistanceFn& distance);

LocalizationMatrix build_periodic_localization(std::size_t n, double r0);

/// Schur (element-wise) product C o P. PSD whenever both factors are.
Eigen::MatrixXd schur_localize(const Eigen::Ref<const Eigen::MatrixXd>& cov,
                               const Eigen::Ref<const Eigen::MatrixXd>& taper);

/// Ridge jitter used before inverting localized ensemble covariances:
/// lambda = scale * trace(P) / n (and at least `scale` for zero-trace P).
double ridge_jitter(const Eigen::Ref<const Eigen::MatrixXd>& cov, double scale = 1e-8);

}  // namespace enkbs
