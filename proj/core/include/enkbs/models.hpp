#pragma once

#include <vector>

#include <Eigen/Core>

#include "enkbs/sde.hpp"

namespace enkbs {

// A concrete system packaged for assimilation: hidden components become the
// SDE state, observed components the observation process. Index lists refer
// to the underlying full state (0-based).
struct PartitionedModel {
  SdeModel sde;
  std::vector<Eigen::Index> hidden_idx;
  std::vector<Eigen::Index> observed_idx;
  Eigen::Index full_dim() const {
    return static_cast<Eigen::Index>(hidden_idx.size() + observed_idx.size());
  }
};

// ---------------------------------------------------------------------------
// Stochastic Lorenz-96: dx_j = (x_{j+1} - x_{j-2}) x_{j-1} - x_j + F, indices
// periodic mod n. Every other lattice site is observed.
struct Lorenz96Config {
  Eigen::Index n = 40;
  double forcing = 8.0;
  double obs_noise_var = 0.1;     // observed sites
  double hidden_noise_var = 5.0;  // hidden sites
};

// Full-state drift; x may hold one column per sample.
void lorenz96_drift(const Eigen::Ref<const Eigen::MatrixXd>& x, const Lorenz96Config& cfg,
                    Eigen::Ref<Eigen::MatrixXd> out);

// Hidden sites are lattice indices 0, 2, 4, ...; observed sites 1, 3, 5, ...
// (the second, fourth, ... components of the ring), each with its configured
// diagonal noise variance.
PartitionedModel make_lorenz96_model(const Lorenz96Config& cfg);

// ---------------------------------------------------------------------------
// Nonlinear dyad with trigger-feedback coupling:
//   du = ((-d_u + c v) u + F_u) dt + sigma_u dW_u
//   dv = (-d_v v - c u^2 + F_v) dt + sigma_v dW_v
struct DyadConfig {
  double d_u = 0.5;
  double f_u = 1.0;
  double sigma_u = 0.5;
  double coupling = 2.0;  // c
  double d_v = 0.5;
  double f_v = 0.8;
  double sigma_v = 1.0;
};

// Which variable is hidden (the causal driver being inferred).
enum class DyadDirection {
  HiddenV,  // v -> u: observe u, estimate v
  HiddenU,  // u -> v: observe v, estimate u
};

Eigen::Vector2d dyad_drift(double u, double v, const DyadConfig& cfg);  // (du, dv) rates

PartitionedModel make_dyad_model(const DyadConfig& cfg, DyadDirection direction);

// ---------------------------------------------------------------------------
// Stochastic Lorenz-84 with (y, z) observed and x hidden:
//   dx = (-(y^2 + z^2) - a (x - f)) dt + sigma_x dW_x
//   dy = (-b x z + x y - y + g) dt + sigma_y dW_y
//   dz = ( b x y + x z - z)     dt + sigma_z dW_z
struct Lorenz84Config {
  double a = 0.25;
  double b = 4.0;
  double f = 8.0;
  double g = 1.0;
  double sigma_x = 0.1;
  double sigma_y = 0.1;
  double sigma_z = 0.1;
};

Eigen::Vector3d lorenz84_drift(double x, double y, double z, const Lorenz84Config& cfg);

PartitionedModel make_lorenz84_model(const Lorenz84Config& cfg);

}  // namespace enkbs
