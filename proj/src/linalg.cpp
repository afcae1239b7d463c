#include "dualenkf/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace dualenkf::linalg {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool is_spd(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  Eigen::LLT<Matrix> llt(symmetrize(m));
  return llt.info() == Eigen::Success;
}

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

std::optional<Matrix> spd_inverse(const Matrix& m) {
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) return std::nullopt;
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  if (!inv.allFinite()) return std::nullopt;
  return symmetrize(inv);
}

std::optional<Matrix> cholesky_factor(const Matrix& m) {
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) return std::nullopt;
  return Matrix(llt.matrixL());
}

Matrix psd_factor(const Matrix& m) {
  if (auto l = cholesky_factor(m)) return *l;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

Matrix controllability_matrix(const Matrix& a, const Matrix& b, bool normalize) {
  const Eigen::Index d = a.rows();
  const Eigen::Index m = b.cols();
  Matrix out(d, d * m);
  Matrix block = b;
  for (Eigen::Index k = 0; k < d; ++k) {
    if (normalize) {
      const double norm = block.norm();
      if (norm > 0.0) block /= norm;
    }
    out.middleCols(k * m, m) = block;
    block = a * block;
  }
  return out;
}

Matrix observability_matrix(const Matrix& a, const Matrix& c, bool normalize) {
  return controllability_matrix(a.transpose(), c.transpose(), normalize).transpose();
}

RankInfo numerical_rank(const Matrix& m, double rel_tol) {
  RankInfo info;
  if (m.size() == 0) return info;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  info.largest = s.size() > 0 ? s(0) : 0.0;
  const double cutoff = rel_tol * info.largest;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) {
      ++info.rank;
      info.smallest_retained = s(i);
    }
  }
  return info;
}

}  // namespace dualenkf::linalg
