#include "enkbs/noise.hpp"

#include <cmath>
#include <numbers>

namespace enkbs {
namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

inline std::uint64_t key_state(std::uint64_t seed, NoiseTag tag, std::uint64_t member,
                               std::uint64_t step) {
  std::uint64_t s = mix(seed, static_cast<std::uint64_t>(tag));
  s = mix(s, member);
  s = mix(s, step);
  return s;
}

// (x >> 11) has 53 random bits; +1 maps to (0, 1] so log() stays finite.
inline double to_unit_open(std::uint64_t x) {
  return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
}

inline double to_unit_halfopen(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Box-Muller on aligned scratch arrays. All draw paths funnel through here so
// a key yields bit-identical values no matter where the destination lives.
void normals_from_state(std::uint64_t state, double* dst, Eigen::Index dim) {
  const Eigen::Index pairs = (dim + 1) / 2;
  thread_local Eigen::ArrayXd u1, u2, radius, angle;
  if (u1.size() < pairs) {
    u1.resize(pairs);
    u2.resize(pairs);
    radius.resize(pairs);
    angle.resize(pairs);
  }
  for (Eigen::Index p = 0; p < pairs; ++p) {
    u1[p] = to_unit_open(splitmix64(state));
    u2[p] = to_unit_halfopen(splitmix64(state));
  }
  auto h1 = u1.head(pairs);
  auto h2 = u2.head(pairs);
  radius.head(pairs) = (-2.0 * h1.log()).sqrt();
  angle.head(pairs) = 2.0 * std::numbers::pi * h2;
  u1.head(pairs) = radius.head(pairs) * angle.head(pairs).cos();  // reuse u1 as z0
  u2.head(pairs) = radius.head(pairs) * angle.head(pairs).sin();  // reuse u2 as z1
  for (Eigen::Index p = 0; p < pairs; ++p) {
    dst[2 * p] = u1[p];
    if (2 * p + 1 < dim) dst[2 * p + 1] = u2[p];
  }
}

}  // namespace

NoiseStream NoiseStream::fork(std::uint64_t stream_id) const {
  return NoiseStream(mix(mix(seed_, 0xF0F0F0F0F0F0F0F0ull), stream_id));
}

Eigen::VectorXd NoiseStream::gaussians(NoiseTag tag, std::uint64_t member, std::uint64_t step,
                                       Eigen::Index dim) const {
  Eigen::VectorXd out(dim);
  fill_gaussians(tag, member, step, out);
  return out;
}

void NoiseStream::fill_gaussians(NoiseTag tag, std::uint64_t member, std::uint64_t step,
                                 Eigen::Ref<Eigen::VectorXd> out) const {
  normals_from_state(key_state(seed_, tag, member, step), out.data(), out.size());
}

void NoiseStream::fill_gaussian_matrix(NoiseTag tag, std::uint64_t step,
                                       Eigen::Ref<Eigen::MatrixXd> out) const {
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    normals_from_state(key_state(seed_, tag, static_cast<std::uint64_t>(i), step),
                       out.col(i).data(), out.rows());
  }
}

double NoiseStream::uniform01(NoiseTag tag, std::uint64_t member, std::uint64_t step) const {
  std::uint64_t s = key_state(seed_, tag, member, step);
  s = mix(s, 0x5151515151515151ull);  // keep uniforms off the Gaussian sequence
  std::uint64_t t = s;
  return to_unit_halfopen(splitmix64(t));
}

}  // namespace enkbs
