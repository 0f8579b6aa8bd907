#include "tsflow/polybasis.hpp"

#include "tsflow/linalg.hpp"

#include <cmath>

namespace tsflow::poly {

namespace {

double weighted_dot(const Vector& w, const Vector& a, const Vector& b) {
    return (w.array() * a.array() * b.array()).sum();
}

}  // namespace

Vector PolynomialBasis::grid() const {
    Vector x(N);
    for (Index i = 0; i < N; ++i) x[i] = static_cast<double>(i + 1) / static_cast<double>(N);
    return x;
}

PolynomialBasis build_basis(Index N, Index n) {
    if (N < 1) throw invalid_config("build_basis: N must be positive");
    if (n < 1 || n > N) throw invalid_config("build_basis: need 1 <= n <= N");

    PolynomialBasis basis;
    basis.N = N;
    basis.n = n;
    basis.weights = Vector::Constant(N, 1.0 / static_cast<double>(N));

    // monomials of the grid centered to [-1, 1]; spans the same degree-graded
    // spaces as raw monomials of tau/N but keeps Gram-Schmidt well conditioned
    Vector x = basis.grid();
    const double mid = 0.5 * (x[0] + x[N - 1]);
    const double half = N > 1 ? 0.5 * (x[N - 1] - x[0]) : 1.0;
    Vector s = (x.array() - mid) / half;

    basis.P.resize(N, n);
    Vector mono = Vector::Ones(N);
    for (Index k = 0; k < n; ++k) {
        if (k > 0) mono = (mono.array() * s.array()).matrix();
        Vector v = mono;
        const double before = std::sqrt(weighted_dot(basis.weights, v, v));
        // modified Gram-Schmidt with one reorthogonalization pass
        for (int pass = 0; pass < 2; ++pass)
            for (Index j = 0; j < k; ++j)
                v -= weighted_dot(basis.weights, basis.P.col(j), v) * basis.P.col(j);
        const double after = std::sqrt(weighted_dot(basis.weights, v, v));
        if (!(after > 1e-12 * before))
            throw invalid_config("build_basis: condition-number guard tripped (n too large)");
        v /= after;
        if (v[N - 1] < 0.0) v = -v;  // positive leading coefficient
        basis.P.col(k) = v;
    }

    basis.lambda_min = linalg::min_singular_value(basis.P);
    basis.linf_norm = basis.P.cwiseAbs().maxCoeff();
    basis.P_pinv = linalg::pinv(basis.P);
    return basis;
}

Projection project(const PolynomialBasis& basis, const Vector& f) {
    if (f.size() != basis.N) throw invalid_input("project: length mismatch");
    require_finite(f, "project");
    Projection p;
    p.coeffs = basis.P_pinv * f;
    p.recon = basis.P * p.coeffs;
    return p;
}

double approx_error(const PolynomialBasis& basis, const Vector& f) {
    if (f.size() != basis.N) throw invalid_input("approx_error: length mismatch");
    require_finite(f, "approx_error");
    return (basis.P * (basis.P_pinv * f) - f).norm();
}

ScalingStudy scaling_study(const data::SignalSpec& signal, Index N,
                           const std::vector<Index>& n_list) {
    if (n_list.empty()) throw invalid_config("scaling_study: empty n list");
    for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
        if (n_list[i] >= n_list[i + 1])
            throw invalid_config("scaling_study: n list must be strictly increasing");
    if (n_list.back() > N) throw invalid_config("scaling_study: max n exceeds N");

    Vector clean = signal.sample_clean(N, 1.0 / static_cast<double>(N));

    // nested construction: the n-column basis contains every smaller one
    PolynomialBasis big = build_basis(N, n_list.back());

    ScalingStudy study;
    for (Index n : n_list) {
        PolynomialBasis sub;
        sub.N = N;
        sub.n = n;
        sub.P = big.P.leftCols(n);
        sub.weights = big.weights;
        sub.lambda_min = linalg::min_singular_value(sub.P);
        sub.linf_norm = sub.P.cwiseAbs().maxCoeff();
        sub.P_pinv = linalg::pinv(sub.P);
        study.rows.push_back({n, approx_error(sub, clean)});
    }

    // slope of log(error) vs log(n), over rows above the numerical floor
    std::vector<double> lx, ly;
    for (const ScalingRow& row : study.rows) {
        if (row.error > 1e-12) {
            lx.push_back(std::log(static_cast<double>(row.n)));
            ly.push_back(std::log(row.error));
        }
    }
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= static_cast<double>(lx.size());
        my /= static_cast<double>(lx.size());
        double num = 0, den = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            num += (lx[i] - mx) * (ly[i] - my);
            den += (lx[i] - mx) * (lx[i] - mx);
        }
        if (den > 0) {
            study.loglog_slope = num / den;
            study.slope_defined = true;
        }
    }
    return study;
}

}  // namespace tsflow::poly
