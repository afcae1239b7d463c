#pragma once

#include <cstdint>
#include <span>

#include "dualenkf/model.hpp"
#include "dualenkf/rng.hpp"

namespace dualenkf {

/// Black-box one-step simulator of the linear SDE. Callers see only
/// increments; nothing downstream reads A or σ through this object.
class Simulator {
 public:
  explicit Simulator(LinearDynamics dynamics);

  /// 𝒮(x, a; τ) = (Ax + Ba)τ + σΔW with ΔW ~ 𝒩(0, τI) drawn from stream.
  /// Returns the increment, not the next state.
  Vector step(const Vector& x, const Vector& a, double tau, RandomStream& stream) const;

  /// Column-wise 𝒮 for a batch; column i draws its ΔW from streams[i].
  /// Noise draws are split across threads, the matrix products are not, so
  /// the result does not depend on the thread count.
  Matrix step_batch(const Matrix& x, const Matrix& a, double tau, std::span<RandomStream> streams,
                    int threads = 1) const;

  Eigen::Index state_dim() const { return dynamics_.state_dim(); }
  Eigen::Index input_dim() const { return dynamics_.input_dim(); }

  /// Number of step() plus step_batch() columns evaluated so far.
  std::uint64_t calls() const { return calls_; }

 private:
  LinearDynamics dynamics_;
  mutable std::uint64_t calls_ = 0;
};

/// Free-function form of Simulator::step.
Vector simulator_step(const Vector& x, const Vector& a, double tau, RandomStream& stream,
                      const LinearDynamics& dynamics);

}  // namespace dualenkf
