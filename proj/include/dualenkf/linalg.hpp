#pragma once

#include <optional>

#include "dualenkf/types.hpp"

namespace dualenkf::linalg {

/// (M + Mᵀ)/2.
Matrix symmetrize(const Matrix& m);

/// True when a Cholesky factorization of the (symmetrized) matrix succeeds.
bool is_spd(const Matrix& m);

/// Smallest eigenvalue of the symmetric part of m.
double min_eigenvalue(const Matrix& m);

/// Inverse of an SPD matrix through its Cholesky factor; nullopt if the
/// factorization fails.
std::optional<Matrix> spd_inverse(const Matrix& m);

/// Lower Cholesky factor, nullopt if m is not SPD. Semidefinite matrices
/// (e.g. a zero noise covariance) go through psd_factor instead.
std::optional<Matrix> cholesky_factor(const Matrix& m);

/// A factor F with F·Fᵀ = m for symmetric positive semidefinite m.
/// Uses Cholesky when possible and falls back to an eigendecomposition.
Matrix psd_factor(const Matrix& m);

/// [B, AB, ..., A^{d-1}B]. With normalize set, every block A^kB is scaled
/// to unit Frobenius norm, which leaves the rank unchanged but keeps the
/// powers of a large A from swamping the SVD.
Matrix controllability_matrix(const Matrix& a, const Matrix& b, bool normalize = false);

/// [C; CA; ...; CA^{d-1}], optionally block-normalized as above.
Matrix observability_matrix(const Matrix& a, const Matrix& c, bool normalize = false);

struct RankInfo {
  int rank = 0;
  double smallest_retained = 0.0;  // smallest singular value counted in the rank
  double largest = 0.0;
};

/// Numerical rank with singular values above rel_tol * largest.
RankInfo numerical_rank(const Matrix& m, double rel_tol = 1e-10);

}  // namespace dualenkf::linalg
