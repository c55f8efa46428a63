#include "enkbs/models.hpp"

#include <memory>
#include <stdexcept>

namespace enkbs {

void lorenz96_drift(const Eigen::Ref<const Eigen::MatrixXd>& x, const Lorenz96Config& cfg,
                    Eigen::Ref<Eigen::MatrixXd> out) {
  const Eigen::Index n = cfg.n;
  if (x.rows() != n) throw std::invalid_argument("lorenz96_drift: state dimension mismatch");
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index jp1 = (j + 1) % n;
    const Eigen::Index jm1 = (j + n - 1) % n;
    const Eigen::Index jm2 = (j + n - 2) % n;
    out.row(j) = (x.row(jp1) - x.row(jm2)).cwiseProduct(x.row(jm1)) - x.row(j);
    out.row(j).array() += cfg.forcing;
  }
}

namespace {

// Shared scaffolding for lattice splits: scatter hidden members and the
// current observation into the full state, evaluate the full drift, gather
// the requested rows.
struct LatticeSplit {
  Lorenz96Config cfg;
  std::vector<Eigen::Index> hidden, observed;

  void drift_rows(const Eigen::Ref<const Eigen::MatrixXd>& state,
                  const Eigen::Ref<const Eigen::VectorXd>& obs, double /*t*/,
                  Eigen::Ref<Eigen::MatrixXd> out, bool hidden_rows) const {
    const Eigen::Index batch = state.cols();
    thread_local Eigen::MatrixXd full, rate;
    full.resize(cfg.n, batch);
    rate.resize(cfg.n, batch);
    for (std::size_t a = 0; a < hidden.size(); ++a)
      full.row(hidden[a]) = state.row(static_cast<Eigen::Index>(a));
    for (std::size_t a = 0; a < observed.size(); ++a)
      full.row(observed[a]).setConstant(obs[static_cast<Eigen::Index>(a)]);
    // Broadcast obs across the batch; hidden rows vary per column.
    lorenz96_drift(full, cfg, rate);
    const auto& rows = hidden_rows ? hidden : observed;
    for (std::size_t a = 0; a < rows.size(); ++a)
      out.row(static_cast<Eigen::Index>(a)) = rate.row(rows[a]);
  }
};

}  // namespace

PartitionedModel make_lorenz96_model(const Lorenz96Config& cfg) {
  if (cfg.n <= 0 || cfg.n % 2 != 0)
    throw std::invalid_argument("make_lorenz96_model: n must be positive and even");
  if (!(cfg.obs_noise_var > 0.0) || !(cfg.hidden_noise_var > 0.0))
    throw std::invalid_argument("make_lorenz96_model: noise variances must be positive");

  PartitionedModel pm;
  for (Eigen::Index j = 0; j < cfg.n; j += 2) pm.hidden_idx.push_back(j);
  for (Eigen::Index j = 1; j < cfg.n; j += 2) pm.observed_idx.push_back(j);

  auto split = std::make_shared<LatticeSplit>(LatticeSplit{cfg, pm.hidden_idx, pm.observed_idx});
  const Eigen::Index nh = static_cast<Eigen::Index>(pm.hidden_idx.size());
  const Eigen::Index no = static_cast<Eigen::Index>(pm.observed_idx.size());

  BatchDrift f = [split](const Eigen::Ref<const Eigen::MatrixXd>& s,
                         const Eigen::Ref<const Eigen::VectorXd>& y, double t,
                         Eigen::Ref<Eigen::MatrixXd> out) {
    split->drift_rows(s, y, t, out, true);
  };
  BatchDrift h = [split](const Eigen::Ref<const Eigen::MatrixXd>& s,
                         const Eigen::Ref<const Eigen::VectorXd>& y, double t,
                         Eigen::Ref<Eigen::MatrixXd> out) {
    split->drift_rows(s, y, t, out, false);
  };

  pm.sde = make_model(nh, no, std::move(f), std::move(h),
                      cfg.hidden_noise_var * Eigen::MatrixXd::Identity(nh, nh),
                      cfg.obs_noise_var * Eigen::MatrixXd::Identity(no, no));
  return pm;
}

Eigen::Vector2d dyad_drift(double u, double v, const DyadConfig& cfg) {
  return {(-cfg.d_u + cfg.coupling * v) * u + cfg.f_u,
          -cfg.d_v * v - cfg.coupling * u * u + cfg.f_v};
}

PartitionedModel make_dyad_model(const DyadConfig& cfg, DyadDirection direction) {
  if (!(cfg.d_u > 0.0) || !(cfg.d_v > 0.0))
    throw std::invalid_argument("make_dyad_model: damping must be positive");

  PartitionedModel pm;
  BatchDrift f, h;
  if (direction == DyadDirection::HiddenV) {
    pm.hidden_idx = {1};  // full state ordering (u, v)
    pm.observed_idx = {0};
    f = [cfg](const Eigen::Ref<const Eigen::MatrixXd>& v,
              const Eigen::Ref<const Eigen::VectorXd>& u, double, Eigen::Ref<Eigen::MatrixXd> out) {
      out.row(0).array() = -cfg.d_v * v.row(0).array() - cfg.coupling * u[0] * u[0] + cfg.f_v;
    };
    h = [cfg](const Eigen::Ref<const Eigen::MatrixXd>& v,
              const Eigen::Ref<const Eigen::VectorXd>& u, double, Eigen::Ref<Eigen::MatrixXd> out) {
      out.row(0).array() = (cfg.coupling * v.row(0).array() - cfg.d_u) * u[0] + cfg.f_u;
    };
    pm.sde = make_model(1, 1, std::move(f), std::move(h),
                        Eigen::MatrixXd::Constant(1, 1, cfg.sigma_v * cfg.sigma_v),
                        Eigen::MatrixXd::Constant(1, 1, cfg.sigma_u * cfg.sigma_u));
  } else {
    pm.hidden_idx = {0};
    pm.observed_idx = {1};
    f = [cfg](const Eigen::Ref<const Eigen::MatrixXd>& u,
              const Eigen::Ref<const Eigen::VectorXd>& v, double, Eigen::Ref<Eigen::MatrixXd> out) {
      out.row(0).array() = (-cfg.d_u + cfg.coupling * v[0]) * u.row(0).array() + cfg.f_u;
    };
    h = [cfg](const Eigen::Ref<const Eigen::MatrixXd>& u,
              const Eigen::Ref<const Eigen::VectorXd>& v, double, Eigen::Ref<Eigen::MatrixXd> out) {
      out.row(0).array() =
          -cfg.coupling * u.row(0).array().square() - cfg.d_v * v[0] + cfg.f_v;
    };
    pm.sde = make_model(1, 1, std::move(f), std::move(h),
                        Eigen::MatrixXd::Constant(1, 1, cfg.sigma_u * cfg.sigma_u),
                        Eigen::MatrixXd::Constant(1, 1, cfg.sigma_v * cfg.sigma_v));
  }
  return pm;
}

Eigen::Vector3d lorenz84_drift(double x, double y, double z, const Lorenz84Config& cfg) {
  return {-(y * y + z * z) - cfg.a * (x - cfg.f),
          -cfg.b * x * z + x * y - y + cfg.g,
          cfg.b * x * y + x * z - z};
}

PartitionedModel make_lorenz84_model(const Lorenz84Config& cfg) {
  if (!(cfg.sigma_x > 0.0) || !(cfg.sigma_y > 0.0) || !(cfg.sigma_z > 0.0))
    throw std::invalid_argument("make_lorenz84_model: noise amplitudes must be positive");

  PartitionedModel pm;
  pm.hidden_idx = {0};       // x
  pm.observed_idx = {1, 2};  // (y, z)

  BatchDrift f = [cfg](const Eigen::Ref<const Eigen::MatrixXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& yz, double,
                       Eigen::Ref<Eigen::MatrixXd> out) {
    const double c = -(yz[0] * yz[0] + yz[1] * yz[1]) + cfg.a * cfg.f;
    out.row(0).array() = -cfg.a * x.row(0).array() + c;
  };
  BatchDrift h = [cfg](const Eigen::Ref<const Eigen::MatrixXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& yz, double,
                       Eigen::Ref<Eigen::MatrixXd> out) {
    const double y = yz[0], z = yz[1];
    out.row(0).array() = (y - cfg.b * z) * x.row(0).array() - y + cfg.g;
    out.row(1).array() = (cfg.b * y + z) * x.row(0).array() - z;
  };

  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(2, 2);
  gamma(0, 0) = cfg.sigma_y * cfg.sigma_y;
  gamma(1, 1) = cfg.sigma_z * cfg.sigma_z;
  pm.sde = make_model(1, 2, std::move(f), std::move(h),
                      Eigen::MatrixXd::Constant(1, 1, cfg.sigma_x * cfg.sigma_x), std::move(gamma));
  return pm;
}

}  // namespace enkbs
