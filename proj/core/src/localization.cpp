#include "enkbs/localization.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace enkbs {

double gaspari_cohn(double r) {
  if (r < 0.0) throw std::invalid_argument("gaspari_cohn: argument must be nonnegative");
  if (r < 1.0) {
    const double r2 = r * r;
    return 1.0 - (5.0 / 3.0) * r2 + (5.0 / 8.0) * r2 * r + 0.5 * r2 * r2 - 0.25 * r2 * r2 * r;
  }
  if (r < 2.0) {
    const double r2 = r * r;
    return 4.0 - 5.0 * r + (5.0 / 3.0) * r2 + (5.0 / 8.0) * r2 * r - 0.5 * r2 * r2 +
           (1.0 / 12.0) * r2 * r2 * r - 2.0 / (3.0 * r);
  }
  return 0.0;
}

double periodic_distance(std::size_t i, std::size_t j, std::size_t n) {
  if (i >= n || j >= n) throw std::invalid_argument("periodic_distance: index out of range");
  const std::size_t d = i > j ? i - j : j - i;
  return static_cast<double>(std::min(d, n - d));
}

Eigen::MatrixXd LocalizationMatrix::block(const std::vector<Eigen::Index>& rows,
                                          const std::vector<Eigen::Index>& cols) const {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b)
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = taper(rows[a], cols[b]);
  return out;
}

LocalizationMatrix build_localization(std::size_t n, double r0, const DistanceFn& distance) {
  if (!(r0 > 0.0)) throw std::invalid_argument("build_localization: radius must be positive");
  LocalizationMatrix loc;
  loc.radius = r0;
  loc.taper.resize(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    loc.taper(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double g = gaspari_cohn(distance(i, j) / r0);
      loc.taper(i, j) = g;
      loc.taper(j, i) = g;
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(loc.taper,
                                                          Eigen::EigenvaluesOnly);
  loc.min_eigenvalue = es.eigenvalues().minCoeff();
  loc.psd = loc.min_eigenvalue >= -1e-8 * static_cast<double>(n);
  return loc;
}

LocalizationMatrix build_periodic_localization(std::size_t n, double r0) {
  return build_localization(n, r0,
                            [n](std::size_t i, std::size_t j) { return periodic_distance(i, j, n); });
}

Eigen::MatrixXd schur_localize(const Eigen::Ref<const Eigen::MatrixXd>& cov,
                               const Eigen::Ref<const Eigen::MatrixXd>& taper) {
  if (cov.rows() != taper.rows() || cov.cols() != taper.cols())
    throw std::invalid_argument("schur_localize: dimension mismatch");
  return cov.cwiseProduct(taper);
}

double ridge_jitter(const Eigen::Ref<const Eigen::MatrixXd>& cov, double scale) {
  const double tr = cov.trace();
  return scale * std::max(tr / static_cast<double>(cov.rows()), 1.0);
}

}  // namespace enkbs
