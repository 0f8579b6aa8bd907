#pragma once

#include "tsflow/check.hpp"
#include "tsflow/parallel.hpp"
#include "tsflow/types.hpp"

#include <vector>

namespace tsflow::linalg {

// Thin singular value decomposition A = U * diag(singular_values) * V^T.
// U has orthonormal columns (rows(A) x k), V likewise (cols(A) x k),
// k = min(rows, cols), values sorted non-increasing.
struct SvdFactors {
    Matrix U;
    Vector singular_values;
    Matrix V;
};

SvdFactors svd(const Matrix& A);

// Moore-Penrose pseudoinverse via truncated SVD; singular values below
// 1e-12 * sigma_max are treated as zero, so rank-deficient inputs are legal.
Matrix pinv(const Matrix& A);

// smallest singular value (0 for rank-deficient inputs)
double min_singular_value(const Matrix& A);

// largest singular value
double spectral_norm(const Matrix& A);

// max over the four Moore-Penrose conditions of the relative residual;
// pinv output satisfies <= 1e-8
double penrose_residual(const Matrix& A, const Matrix& P);

// norm bound:  ||pinv(A)||_2 <= 1 / lambda_min(A)  for lambda_min(A) > 0.
// lhs/rhs are the two sides; the l_inf operator-norm reading is logged in
// stats with its sqrt(d) dimension-slack bound.
CheckReport check_pinv_norm_bound(const Matrix& A);

// perturbation bound:  ||pinv(A) - pinv(B)||_2 <=
//   max(||pinv(A)||_2, ||pinv(B)||_2)^2 * ||A - B||_2,
// valid only for full-column-rank pairs with
// ||A - B||_2 <= 0.1 * min(lambda_min(A), lambda_min(B)).
CheckReport check_pinv_perturbation_bound(const Matrix& A, const Matrix& B);

// batch fan-out over independent inputs; parallel path is bitwise identical
// to the serial reference
std::vector<CheckReport> check_norm_bound_batch(const std::vector<Matrix>& mats,
                                                exec_mode mode = exec_mode::parallel);
std::vector<CheckReport> check_perturbation_bound_batch(
    const std::vector<std::pair<Matrix, Matrix>>& pairs,
    exec_mode mode = exec_mode::parallel);

}  // namespace tsflow::linalg
