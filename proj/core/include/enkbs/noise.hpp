#pragma once

#include <cstdint>
#include <Eigen/Core>

namespace enkbs {

// Purpose tag of a noise substream. The (tag, member, step) triple addresses
// an independent Gaussian vector, so forward-pass increments can be
// regenerated bit-exactly in the backward pass instead of being redrawn.
enum class NoiseTag : std::uint32_t {
  TruthSignal = 1,
  TruthObs = 2,
  EnsembleInit = 3,
  EnsembleSignal = 4,
  EnsembleObs = 5,
  ParticleInit = 6,
  ParticleSignal = 7,
  ParticleResample = 8,
  Generic = 100,
};

// Counter-based Gaussian stream. Stateless: every draw is a pure function of
// (seed, tag, member, step), so concurrent use needs no synchronization and
// the same key always yields the same vector.
class NoiseStream {
 public:
  NoiseStream() = default;
  explicit NoiseStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Derived stream, independent of this one for distinct ids.
  NoiseStream fork(std::uint64_t stream_id) const;

  /// dim i.i.d. standard normals, deterministic in (seed, tag, member, step).
  Eigen::VectorXd gaussians(NoiseTag tag, std::uint64_t member, std::uint64_t step,
                            Eigen::Index dim) const;

  void fill_gaussians(NoiseTag tag, std::uint64_t member, std::uint64_t step,
                      Eigen::Ref<Eigen::VectorXd> out) const;

  // Column i receives the vector keyed by member i.
  void fill_gaussian_matrix(NoiseTag tag, std::uint64_t step,
                            Eigen::Ref<Eigen::MatrixXd> out) const;

  /// One uniform draw in [0, 1), keyed like the Gaussian draws.
  double uniform01(NoiseTag tag, std::uint64_t member, std::uint64_t step) const;

 private:
  std::uint64_t seed_ = 0;
};

}  // namespace enkbs
