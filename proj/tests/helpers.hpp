#pragma once

#include <cmath>

#include "dualenkf/model.hpp"

namespace testing {

using dualenkf::CostKind;
using dualenkf::LqProblem;
using dualenkf::Matrix;

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// Scalar plant dx = (a x + b u) dt + s dW with cost ½c²x² + ½r u², terminal ½g x².
inline LqProblem scalar_problem(double a, double b, double c, double r, double g, double s = 0.0,
                                CostKind kind = CostKind::LQG, double theta = 0.0) {
  LqProblem p;
  p.dynamics.A = scalar(a);
  p.dynamics.B = scalar(b);
  p.dynamics.sigma = scalar(s);
  p.cost.C = scalar(c);
  p.cost.R = scalar(r);
  p.cost.G = scalar(g);
  p.cost.kind = kind;
  p.cost.theta = theta;
  return p;
}

inline double rel_diff(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace testing
