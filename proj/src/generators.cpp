#include "dualenkf/generators.hpp"

#include <stdexcept>

#include "dualenkf/rng.hpp"

namespace dualenkf {

LqProblem gen_spring_mass_damper(int masses, double sigma_scale, bool flip_stability) {
  if (masses < 1) throw std::invalid_argument("spring-mass-damper needs at least one mass");
  const Eigen::Index n = masses;
  const Eigen::Index d = 2 * n;
  Matrix toeplitz = 2.0 * Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    toeplitz(i, i + 1) = -1.0;
    toeplitz(i + 1, i) = -1.0;
  }
  LqProblem p;
  p.dynamics.A = Matrix::Zero(d, d);
  p.dynamics.A.topRightCorner(n, n) = Matrix::Identity(n, n);
  p.dynamics.A.bottomLeftCorner(n, n) = -toeplitz;
  p.dynamics.A.bottomRightCorner(n, n) = -toeplitz;
  if (flip_stability) p.dynamics.A = -p.dynamics.A;
  p.dynamics.B = Matrix::Zero(d, n);
  p.dynamics.B.bottomRows(n) = Matrix::Identity(n, n);
  p.dynamics.sigma = sigma_scale * p.dynamics.B;
  p.cost.C = Matrix::Identity(d, d);
  p.cost.R = Matrix::Identity(n, n);
  p.cost.G = Matrix::Identity(d, d);
  p.cost.kind = CostKind::LQG;
  p.horizon = Horizon::average();
  return p;
}

LqProblem gen_random_canonical(int dim, std::uint64_t seed, double sigma_scale) {
  if (dim < 1) throw std::invalid_argument("random canonical system needs d >= 1");
  const Eigen::Index d = dim;
  LqProblem p;
  p.dynamics.A = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i + 1 < d; ++i) p.dynamics.A(i, i + 1) = 1.0;
  RandomStream stream(seed, Channel::Generator, 0, 0);
  for (Eigen::Index j = 0; j < d; ++j) p.dynamics.A(d - 1, j) = stream.normal();
  p.dynamics.B = Matrix::Zero(d, 1);
  p.dynamics.B(d - 1, 0) = 1.0;
  p.dynamics.sigma = sigma_scale * p.dynamics.B;
  p.cost.C = Matrix::Identity(d, d);
  p.cost.R = Matrix::Identity(1, 1);
  p.cost.G = Matrix::Identity(d, d);
  p.cost.kind = CostKind::LQG;
  p.horizon = Horizon::average();
  return p;
}

}  // namespace dualenkf
