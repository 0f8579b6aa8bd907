#pragma once

#include "tsflow/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tsflow::data {

// Index split of [N] into inputs I_x and outputs I_y. Indices are 0-based
// internally; exports use the 1-based tau convention.
struct IndexSets {
    Index N = 0;
    std::vector<Index> I_x;
    std::vector<Index> I_y;
};

enum class SplitMode { forecast, imputation };

IndexSets make_index_sets(Index N, Index N_x, SplitMode mode, std::uint64_t seed);

// |I| x N selection matrix with one-hot rows e_{I[k]}^T
Matrix observation_matrix(const std::vector<Index>& I, Index N);

enum class SignalFamily { constant, linear_ramp, sine_mixture, damped_trend };

const char* family_name(SignalFamily family);

// Analytic signal g with a known Lipschitz bound. Parameter layout:
//   constant:      [c]
//   linear_ramp:   [a, b]                      g(t) = a*t + b
//   sine_mixture:  [a1, w1, p1, a2, w2, p2..]  g(t) = sum a_i sin(2*pi*w_i*t + p_i)
//   damped_trend:  [a, lam, c]                 g(t) = a*exp(-lam*t) + c*t
// make_signal rescales the amplitude parameters so max |g(tau*delta)| <= sqrt(N).
struct SignalSpec {
    SignalFamily family = SignalFamily::constant;
    std::vector<double> parameters;
    double lipschitz_L0 = 0.0;    // analytic bound on |g'|, after rescaling
    double amplitude_bound = 0.0; // sqrt(N) cap enforced at construction

    double eval(double t) const;
    // noise-free samples g(tau*delta), tau = 1..N
    Vector sample_clean(Index N, double delta) const;
    bool same_spec(const SignalSpec& other) const;
};

SignalSpec make_signal(SignalFamily family, std::vector<double> parameters, Index N, double delta);

struct SeriesSample {
    Vector f;    // R^N
    Vector f_x;  // M(I_x) f
    Vector f_y;  // M(I_y) f
    SignalSpec signal;
    double delta = 0.0;
    double noise_variance = 0.0;
    std::uint64_t seed = 0;
};

SeriesSample sample_series(const SignalSpec& signal, double delta, double v, Index N,
                           const IndexSets& sets, std::uint64_t seed);

struct Dataset {
    IndexSets index_sets;
    std::vector<SeriesSample> samples;

    Index size() const { return static_cast<Index>(samples.size()); }
    Index N() const { return index_sets.N; }
    Index N_x() const { return static_cast<Index>(index_sets.I_x.size()); }
    Index N_y() const { return static_cast<Index>(index_sets.I_y.size()); }
};

Dataset make_dataset(const std::vector<SignalSpec>& signals, Index per_signal, double delta,
                     double v, Index N, const IndexSets& sets, std::uint64_t seed);

// Fresh evaluation resamples for risk experiments. Entries 2k and 2k+1 share a
// signal and an antithetic noise pair (clean +/- sqrt(v)*xi), so risk curves
// over a v-grid evaluated with the same seed have no odd noise cross term:
// the empirical risk is exactly (clean error) + v * (noise response).
std::vector<SeriesSample> resample_set(const std::vector<SignalSpec>& signals,
                                       const IndexSets& sets, double delta, double v,
                                       Index count, std::uint64_t seed);

}  // namespace tsflow::data
