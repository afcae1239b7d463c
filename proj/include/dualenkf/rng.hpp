#pragma once

#include <array>
#include <cstdint>

#include "dualenkf/types.hpp"

namespace dualenkf {

/// Philox4x32-10 block function (Salmon et al., SC'11). Pure: the same
/// (counter, key) always yields the same four words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// What a stream is used for. Part of the counter, so streams for different
/// purposes never overlap.
enum class Channel : std::uint32_t {
  Terminal = 1,
  Exploration = 2,
  Process = 3,
  Probe = 4,
  Rollout = 5,
  Generator = 6,
  InitialState = 7,
  Seeding = 8,
};

/// Child seed for sub-task (a, b) of a run seeded with seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

/// A counter-based substream keyed by (seed, channel, index, step). Draws do
/// not depend on how many other streams exist or in which order they are
/// consumed, so work can be split across threads freely.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, Channel channel, std::uint64_t index, std::uint64_t step);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal (Box–Muller).
  double normal();
  Vector normal_vector(Eigen::Index n);
  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>& out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = normal();
  }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dualenkf
