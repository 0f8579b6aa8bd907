#pragma once

#include "tsflow/datamodel.hpp"
#include "tsflow/types.hpp"

#include <vector>

namespace tsflow::poly {

// Discrete orthogonal polynomial basis on the uniform grid x_tau = tau/N,
// tau = 1..N, with uniform weights 1/N. Column i is a degree-(i-1) polynomial;
// columns have unit weighted norm, so P^T diag(w) P = I.
struct PolynomialBasis {
    Index N = 0;
    Index n = 0;
    Matrix P;        // N x n
    Vector weights;  // uniform 1/N
    double lambda_min = 0.0;
    double linf_norm = 0.0;
    Matrix P_pinv;   // cached pseudoinverse, n x N

    Vector grid() const;  // x_tau = tau/N
};

// Modified Gram-Schmidt on monomials (evaluated in a centered variable for
// conditioning; the resulting orthonormal sequence is identical). Refuses
// numerically dependent columns (condition guard ~1e12, n beyond ~40).
PolynomialBasis build_basis(Index N, Index n);

struct Projection {
    Vector coeffs;  // P^+ f
    Vector recon;   // P coeffs
};

Projection project(const PolynomialBasis& basis, const Vector& f);

// || P P^+ f - f ||_2
double approx_error(const PolynomialBasis& basis, const Vector& f);

struct ScalingRow {
    Index n = 0;
    double error = 0.0;
};

struct ScalingStudy {
    std::vector<ScalingRow> rows;
    double loglog_slope = 0.0;  // least-squares slope of log(error) vs log(n)
    bool slope_defined = false; // false when errors sit at the numerical floor
};

// approximation error of the noise-free signal sample (grid-aligned,
// delta = 1/N) across nested bases
ScalingStudy scaling_study(const data::SignalSpec& signal, Index N,
                           const std::vector<Index>& n_list);

}  // namespace tsflow::poly
