#include "doctest.h"

#include "tsflow/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "tsflow/rng.hpp"

using namespace tsflow;
using data::IndexSets;
using data::SignalFamily;
using data::SignalSpec;

namespace {

data::Dataset ramp_only_dataset(Index N, Index N_x, data::SplitMode mode) {
    IndexSets sets = data::make_index_sets(N, N_x, mode, 77);
    SignalSpec ramp = data::make_signal(SignalFamily::linear_ramp, {0.8, 0.3}, N, 1.0 / double(N));
    return data::make_dataset({ramp}, 1, 1.0 / double(N), 0.0, N, sets, 5);
}

std::vector<SignalSpec> mixed_signals(Index N, double delta) {
    return {
        data::make_signal(SignalFamily::linear_ramp, {0.8, 0.3}, N, delta),
        data::make_signal(SignalFamily::sine_mixture, {1.0, 0.8, 0.4}, N, delta),
        data::make_signal(SignalFamily::sine_mixture, {0.7, 1.7, 0.4}, N, delta),
        data::make_signal(SignalFamily::damped_trend, {1.2, 2.0, 0.7}, N, delta),
    };
}

}  // namespace

TEST_CASE("kernel predictor: single-series dataset is reproduced exactly") {
    const Index N = 16, N_x = 12;
    data::Dataset ds = ramp_only_dataset(N, N_x, data::SplitMode::forecast);
    poly::PolynomialBasis basis = poly::build_basis(N, 4);

    for (double h : {1e-4, 1.0, 1e12}) {
        pred::KernelPredictor kp(ds, basis, h);
        CHECK((kp.phi(ds.samples[0].f_x) - ds.samples[0].f).lpNorm<Eigen::Infinity>() == 0.0);
        // ramp is degree 1, inside the n=4 span, so the projection is exact
        CHECK((kp.predict(ds.samples[0].f_x) - ds.samples[0].f_y).norm() <= 1e-8);
    }

    pred::KernelPredictor kp(ds, basis, 1.0);
    CHECK(pred::predictor_risk(kp, ds.samples) <= 1e-12);
}

TEST_CASE("kernel weights: equal-weight and dominant-weight limits") {
    const Index N = 16, N_x = 12;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::forecast, 0);
    const double delta = 1.0 / double(N);
    data::Dataset ds = data::make_dataset(mixed_signals(N, delta), 1, delta, 0.0, N, sets, 9);
    poly::PolynomialBasis basis = poly::build_basis(N, 4);

    Vector mean = Vector::Zero(N);
    for (const auto& s : ds.samples) mean += s.f;
    mean /= double(ds.size());

    pred::KernelPredictor flat(ds, basis, 1e12);
    CHECK((flat.phi(ds.samples[1].f_x) - mean).lpNorm<Eigen::Infinity>() <= 1e-6);

    pred::KernelPredictor sharp(ds, basis, 1e-4);
    for (const auto& s : ds.samples)
        CHECK((sharp.phi(s.f_x) - s.f).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("phi is a convex combination and is dataset-order invariant") {
    const Index N = 16, N_x = 12;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::imputation, 3);
    const double delta = 1.0 / double(N);
    data::Dataset ds = data::make_dataset(mixed_signals(N, delta), 2, delta, 1e-2, N, sets, 11);
    poly::PolynomialBasis basis = poly::build_basis(N, 4);

    Vector query = ds.samples[2].f_x + 0.05 * rng::gaussian_vector(N_x, rng::derive(1, 2));

    pred::KernelPredictor kp(ds, basis, 0.5);
    Vector p = kp.phi(query);
    for (Index j = 0; j < N; ++j) {
        double lo = ds.samples[0].f[j], hi = lo;
        for (const auto& s : ds.samples) {
            lo = std::min(lo, s.f[j]);
            hi = std::max(hi, s.f[j]);
        }
        CHECK(p[j] >= lo - 1e-12);
        CHECK(p[j] <= hi + 1e-12);
    }

    data::Dataset reversed = ds;
    std::reverse(reversed.samples.begin(), reversed.samples.end());
    pred::KernelPredictor kp_rev(reversed, basis, 0.5);
    CHECK((kp_rev.phi(query) - p).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((kp_rev.predict(query) - kp.predict(query)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("full basis: prediction restricts phi to the output indices") {
    const Index N = 8, N_x = 6;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::forecast, 0);
    const double delta = 1.0 / double(N);
    data::Dataset ds = data::make_dataset(mixed_signals(N, delta), 1, delta, 0.0, N, sets, 21);
    poly::PolynomialBasis basis = poly::build_basis(N, N);
    pred::KernelPredictor kp(ds, basis, 1.0);

    Vector query = ds.samples[2].f_x;
    Vector phi = kp.phi(query);
    Matrix My = data::observation_matrix(sets.I_y, N);
    CHECK((kp.predict(query) - My * phi).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("automatic bandwidth is the 10th-percentile pairwise squared distance") {
    const Index N = 16, N_x = 12;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::forecast, 0);
    const double delta = 1.0 / double(N);
    poly::PolynomialBasis basis = poly::build_basis(N, 4);

    std::vector<SignalSpec> two = {mixed_signals(N, delta)[0], mixed_signals(N, delta)[1]};
    data::Dataset ds = data::make_dataset(two, 1, delta, 0.0, N, sets, 13);
    pred::KernelPredictor kp(ds, basis, 0.0);
    const double expected = (ds.samples[0].f_x - ds.samples[1].f_x).squaredNorm();
    CHECK(kp.bandwidth() == doctest::Approx(expected).epsilon(1e-14));

    data::Dataset one = data::make_dataset({two[0]}, 1, delta, 0.0, N, sets, 13);
    pred::KernelPredictor kp1(one, basis, 0.0);
    CHECK(kp1.bandwidth() == 1.0);
}

TEST_CASE("regularized predictor: exact recovery of in-span series") {
    const Index N = 32, N_x = 24, n = 8;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::imputation, 215);
    poly::PolynomialBasis basis = poly::build_basis(N, n);
    pred::RegularizedPredictor rp(basis, sets);

    // f = P c with random coefficients lies in span, so f_y is recovered exactly
    Vector c = rng::gaussian_vector(n, rng::derive(4, rng::tag("coef")));
    Vector f = basis.P * c;
    Matrix Mx = data::observation_matrix(sets.I_x, N);
    Matrix My = data::observation_matrix(sets.I_y, N);
    CHECK((rp.predict(Mx * f) - My * f).norm() <= 1e-8);

    CHECK(rp.predict(Vector::Zero(N_x)).norm() == 0.0);

    Vector u = rng::gaussian_vector(N_x, rng::derive(5, 1));
    Vector w = rng::gaussian_vector(N_x, rng::derive(5, 2));
    Vector lhs = rp.predict(2.0 * u - 3.0 * w);
    Vector rhs = 2.0 * rp.predict(u) - 3.0 * rp.predict(w);
    CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("regularized predictor refuses rank-deficient input maps") {
    // with fewer observed indices than basis columns, MxP cannot have full column rank
    const Index N = 8, N_x = 3, n = 4;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::forecast, 0);
    poly::PolynomialBasis basis = poly::build_basis(N, n);
    CHECK_THROWS_AS(pred::RegularizedPredictor(basis, sets), rank_deficient);
}

TEST_CASE("risk on antithetic resamples is exactly affine and non-decreasing in v") {
    const Index N = 32, N_x = 24, n = 8;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::imputation, 215);
    poly::PolynomialBasis basis = poly::build_basis(N, n);
    pred::RegularizedPredictor rp(basis, sets);
    const double delta = 1.0 / double(N);
    std::vector<SignalSpec> sigs = mixed_signals(N, delta);

    // same seed across the v-grid: antithetic pairs cancel the noise cross term,
    // so risk(v) = clean + v * response exactly
    std::vector<double> risks;
    for (double v : {0.0, 1e-4, 1e-2}) {
        auto eval = data::resample_set(sigs, sets, delta, v, 64, 2);
        risks.push_back(pred::predictor_risk(rp, eval));
    }
    CHECK(risks[0] <= risks[1]);
    CHECK(risks[1] <= risks[2]);

    const double clean = risks[0];
    const double slope = (risks[2] - clean) / 1e-2;
    CHECK(risks[1] == doctest::Approx(clean + 1e-4 * slope).epsilon(1e-9));

    // v=0 risk is bounded by the mean squared whole-series projection error
    double proj = 0.0;
    for (const auto& s : sigs) {
        const double e = poly::approx_error(basis, s.sample_clean(N, delta));
        proj += e * e;
    }
    proj /= double(sigs.size());
    CHECK(clean <= proj + 1e-8);
}

TEST_CASE("risk evaluation: parallel equals serial bitwise") {
    const Index N = 16, N_x = 12;
    IndexSets sets = data::make_index_sets(N, N_x, data::SplitMode::imputation, 3);
    const double delta = 1.0 / double(N);
    data::Dataset ds = data::make_dataset(mixed_signals(N, delta), 2, delta, 1e-2, N, sets, 11);
    poly::PolynomialBasis basis = poly::build_basis(N, 4);
    pred::KernelPredictor kp(ds, basis, 0.0);

    auto eval = data::resample_set(mixed_signals(N, delta), sets, delta, 1e-2, 33, 4);
    const double rs = pred::predictor_risk(kp, eval, exec_mode::serial);
    const double rp = pred::predictor_risk(kp, eval, exec_mode::parallel);
    CHECK(rs == rp);
    CHECK(rs > 0.0);
}
