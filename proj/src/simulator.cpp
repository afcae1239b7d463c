#include "dualenkf/simulator.hpp"

#include <cmath>

#include "dualenkf/parallel.hpp"

namespace dualenkf {

Simulator::Simulator(LinearDynamics dynamics) : dynamics_(std::move(dynamics)) {}

Vector Simulator::step(const Vector& x, const Vector& a, double tau, RandomStream& stream) const {
  if (x.size() != state_dim() || a.size() != input_dim()) throw DimensionError("simulator: state or input size mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("simulator: tau must be positive");
  ++calls_;
  const Vector dw = std::sqrt(tau) * stream.normal_vector(dynamics_.noise_dim());
  return (dynamics_.A * x + dynamics_.B * a) * tau + dynamics_.sigma * dw;
}

Matrix Simulator::step_batch(const Matrix& x, const Matrix& a, double tau, std::span<RandomStream> streams,
                             int threads) const {
  const Eigen::Index n = x.cols();
  if (x.rows() != state_dim() || a.rows() != input_dim() || a.cols() != n ||
      static_cast<Eigen::Index>(streams.size()) != n)
    throw DimensionError("simulator: batch shape mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("simulator: tau must be positive");
  calls_ += static_cast<std::uint64_t>(n);
  Matrix dw(dynamics_.noise_dim(), n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto col = dw.col(static_cast<Eigen::Index>(i));
      streams[i].fill_normal(col);
    }
  });
  dw *= std::sqrt(tau);
  Matrix out = dynamics_.A * x;
  out.noalias() += dynamics_.B * a;
  out *= tau;
  out.noalias() += dynamics_.sigma * dw;
  return out;
}

Vector simulator_step(const Vector& x, const Vector& a, double tau, RandomStream& stream,
                      const LinearDynamics& dynamics) {
  return Simulator(dynamics).step(x, a, tau, stream);
}

}  // namespace dualenkf
