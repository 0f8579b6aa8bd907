#include "tsflow/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace tsflow::linalg {

namespace {

constexpr double kRankCutoff = 1e-12;  // relative to sigma_max

// max-abs-row-sum operator norm
double linf_norm(const Matrix& m) {
    double best = 0.0;
    for (Index i = 0; i < m.rows(); ++i) best = std::max(best, m.row(i).lpNorm<1>());
    return best;
}

double rel_residual(const Matrix& diff, const Matrix& ref) {
    return diff.norm() / std::max(1.0, ref.norm());
}

}  // namespace

SvdFactors svd(const Matrix& A) {
    require_finite(A, "svd");
    Eigen::JacobiSVD<Matrix> dec(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return SvdFactors{dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

Matrix pinv(const Matrix& A) {
    SvdFactors f = svd(A);
    const double cutoff = kRankCutoff * f.singular_values[0];
    Vector inv = Vector::Zero(f.singular_values.size());
    for (Index i = 0; i < inv.size(); ++i)
        if (f.singular_values[i] > cutoff) inv[i] = 1.0 / f.singular_values[i];
    return f.V * inv.asDiagonal() * f.U.transpose();
}

double min_singular_value(const Matrix& A) {
    SvdFactors f = svd(A);
    return f.singular_values[f.singular_values.size() - 1];
}

double spectral_norm(const Matrix& A) {
    require_finite(A, "spectral_norm");
    return Eigen::JacobiSVD<Matrix>(A).singularValues()[0];
}

double penrose_residual(const Matrix& A, const Matrix& P) {
    Matrix AP = A * P;
    Matrix PA = P * A;
    double r1 = rel_residual(AP * A - A, A);
    double r2 = rel_residual(PA * P - P, P);
    double r3 = rel_residual(AP.transpose() - AP, AP);
    double r4 = rel_residual(PA.transpose() - PA, PA);
    return std::max({r1, r2, r3, r4});
}

CheckReport check_pinv_norm_bound(const Matrix& A) {
    require_finite(A, "check_pinv_norm_bound");
    const double lam = min_singular_value(A);
    if (lam <= 1e-10) throw invalid_input("check_pinv_norm_bound: near-singular input");

    Matrix Ap = pinv(A);
    CheckReport rep;
    rep.name = "pinv_norm_bound";
    rep.lhs = spectral_norm(Ap);
    rep.rhs = 1.0 / lam;
    rep.pass = rep.lhs <= rep.rhs * (1.0 + 1e-8);
    rep.stat("lambda_min", lam);
    rep.stat("tightness", rep.lhs * lam);
    // auxiliary max-row-sum reading: ||pinv(A)||_inf <= sqrt(rows(A)) / lambda_min
    const double slack = std::sqrt(static_cast<double>(A.rows()));
    rep.stat("linf_lhs", linf_norm(Ap));
    rep.stat("linf_rhs", slack * rep.rhs);
    rep.stat("linf_holds", linf_norm(Ap) <= slack * rep.rhs * (1.0 + 1e-8) ? 1.0 : 0.0);
    return rep;
}

CheckReport check_pinv_perturbation_bound(const Matrix& A, const Matrix& B) {
    require_finite(A, "check_pinv_perturbation_bound");
    require_finite(B, "check_pinv_perturbation_bound");
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw invalid_input("check_pinv_perturbation_bound: shape mismatch");

    const double lam_a = min_singular_value(A);
    const double lam_b = min_singular_value(B);
    if (lam_a < 1e-6 || lam_b < 1e-6)
        throw invalid_input("check_pinv_perturbation_bound: rank-deficient input");
    const double dist = spectral_norm(A - B);
    if (dist > 0.1 * std::min(lam_a, lam_b))
        throw invalid_input("check_pinv_perturbation_bound: perturbation outside valid regime");

    Matrix Ap = pinv(A);
    Matrix Bp = pinv(B);
    const double na = spectral_norm(Ap);
    const double nb = spectral_norm(Bp);

    CheckReport rep;
    rep.name = "pinv_perturbation_bound";
    rep.lhs = spectral_norm(Ap - Bp);
    rep.rhs = std::max(na * na, nb * nb) * dist;
    rep.pass = rep.lhs <= rep.rhs * (1.0 + 1e-6);
    rep.stat("lambda_min_a", lam_a);
    rep.stat("lambda_min_b", lam_b);
    rep.stat("perturbation_norm", dist);
    return rep;
}

std::vector<CheckReport> check_norm_bound_batch(const std::vector<Matrix>& mats, exec_mode mode) {
    std::vector<CheckReport> out(mats.size());
    parallel_for(static_cast<std::ptrdiff_t>(mats.size()), mode,
                 [&](std::ptrdiff_t i) { out[i] = check_pinv_norm_bound(mats[i]); });
    return out;
}

std::vector<CheckReport> check_perturbation_bound_batch(
    const std::vector<std::pair<Matrix, Matrix>>& pairs, exec_mode mode) {
    std::vector<CheckReport> out(pairs.size());
    parallel_for(static_cast<std::ptrdiff_t>(pairs.size()), mode, [&](std::ptrdiff_t i) {
        out[i] = check_pinv_perturbation_bound(pairs[i].first, pairs[i].second);
    });
    return out;
}

}  // namespace tsflow::linalg
