#include "tsflow/datamodel.hpp"

#include "tsflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsflow::data {

IndexSets make_index_sets(Index N, Index N_x, SplitMode mode, std::uint64_t seed) {
    if (N < 2) throw invalid_config("make_index_sets: N must be at least 2");
    if (N_x < 1 || N_x > N - 1) throw invalid_config("make_index_sets: N_x out of range");

    IndexSets sets;
    sets.N = N;
    if (mode == SplitMode::forecast) {
        for (Index i = 0; i < N_x; ++i) sets.I_x.push_back(i);
        for (Index i = N_x; i < N; ++i) sets.I_y.push_back(i);
        return sets;
    }

    // seeded Fisher-Yates, then the first N_x positions form I_x
    std::vector<Index> perm(static_cast<std::size_t>(N));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 0; i < N - 1; ++i) {
        double u = rng::uniform01(rng::derive(seed, rng::tag("subset"), static_cast<std::uint64_t>(i)));
        Index j = i + static_cast<Index>(u * static_cast<double>(N - i));
        if (j >= N) j = N - 1;
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    sets.I_x.assign(perm.begin(), perm.begin() + N_x);
    sets.I_y.assign(perm.begin() + N_x, perm.end());
    std::sort(sets.I_x.begin(), sets.I_x.end());
    std::sort(sets.I_y.begin(), sets.I_y.end());
    return sets;
}

Matrix observation_matrix(const std::vector<Index>& I, Index N) {
    std::vector<bool> seen(static_cast<std::size_t>(N), false);
    Matrix M = Matrix::Zero(static_cast<Index>(I.size()), N);
    for (std::size_t k = 0; k < I.size(); ++k) {
        Index idx = I[k];
        if (idx < 0 || idx >= N) throw invalid_input("observation_matrix: index out of range");
        if (seen[static_cast<std::size_t>(idx)])
            throw invalid_input("observation_matrix: duplicate index");
        seen[static_cast<std::size_t>(idx)] = true;
        M(static_cast<Index>(k), idx) = 1.0;
    }
    return M;
}

const char* family_name(SignalFamily family) {
    switch (family) {
        case SignalFamily::constant: return "constant";
        case SignalFamily::linear_ramp: return "linear-ramp";
        case SignalFamily::sine_mixture: return "sine-mixture";
        case SignalFamily::damped_trend: return "damped-trend";
    }
    return "unknown";
}

namespace {

void check_param_layout(SignalFamily family, const std::vector<double>& p) {
    switch (family) {
        case SignalFamily::constant:
            if (p.size() != 1) throw invalid_config("constant signal takes 1 parameter");
            break;
        case SignalFamily::linear_ramp:
            if (p.size() != 2) throw invalid_config("linear-ramp signal takes 2 parameters");
            break;
        case SignalFamily::sine_mixture:
            if (p.empty() || p.size() % 3 != 0)
                throw invalid_config("sine-mixture signal takes (amp, freq, phase) triplets");
            break;
        case SignalFamily::damped_trend:
            if (p.size() != 3) throw invalid_config("damped-trend signal takes 3 parameters");
            if (p[1] < 0.0) throw invalid_config("damped-trend decay must be >= 0");
            break;
    }
    for (double x : p)
        if (!std::isfinite(x)) throw invalid_config("signal parameter not finite");
}

double eval_raw(SignalFamily family, const std::vector<double>& p, double t) {
    switch (family) {
        case SignalFamily::constant:
            return p[0];
        case SignalFamily::linear_ramp:
            return p[0] * t + p[1];
        case SignalFamily::sine_mixture: {
            double acc = 0.0;
            for (std::size_t k = 0; k + 2 < p.size(); k += 3)
                acc += p[k] * std::sin(2.0 * M_PI * p[k + 1] * t + p[k + 2]);
            return acc;
        }
        case SignalFamily::damped_trend:
            return p[0] * std::exp(-p[1] * t) + p[2] * t;
    }
    return 0.0;
}

// analytic bound on sup |g'|
double lipschitz_raw(SignalFamily family, const std::vector<double>& p) {
    switch (family) {
        case SignalFamily::constant:
            return 0.0;
        case SignalFamily::linear_ramp:
            return std::abs(p[0]);
        case SignalFamily::sine_mixture: {
            double acc = 0.0;
            for (std::size_t k = 0; k + 2 < p.size(); k += 3)
                acc += std::abs(p[k]) * 2.0 * M_PI * std::abs(p[k + 1]);
            return acc;
        }
        case SignalFamily::damped_trend:
            return std::abs(p[0]) * p[1] + std::abs(p[2]);
    }
    return 0.0;
}

// scaling the amplitude-like parameters scales g uniformly for every family
void scale_params(SignalFamily family, std::vector<double>& p, double s) {
    switch (family) {
        case SignalFamily::constant:
            p[0] *= s;
            break;
        case SignalFamily::linear_ramp:
            p[0] *= s;
            p[1] *= s;
            break;
        case SignalFamily::sine_mixture:
            for (std::size_t k = 0; k + 2 < p.size(); k += 3) p[k] *= s;
            break;
        case SignalFamily::damped_trend:
            p[0] *= s;
            p[2] *= s;
            break;
    }
}

}  // namespace

double SignalSpec::eval(double t) const { return eval_raw(family, parameters, t); }

Vector SignalSpec::sample_clean(Index N, double delta) const {
    Vector g(N);
    for (Index i = 0; i < N; ++i) g[i] = eval(static_cast<double>(i + 1) * delta);
    return g;
}

bool SignalSpec::same_spec(const SignalSpec& other) const {
    return family == other.family && parameters == other.parameters;
}

SignalSpec make_signal(SignalFamily family, std::vector<double> parameters, Index N,
                       double delta) {
    if (N < 1) throw invalid_config("make_signal: N must be positive");
    if (delta <= 0.0) throw invalid_config("make_signal: delta must be positive");
    check_param_layout(family, parameters);

    double peak = 0.0;
    for (Index i = 0; i < N; ++i)
        peak = std::max(peak, std::abs(eval_raw(family, parameters, static_cast<double>(i + 1) * delta)));
    const double cap = std::sqrt(static_cast<double>(N));
    double scale = peak > cap ? cap / peak : 1.0;
    if (scale != 1.0) scale_params(family, parameters, scale);

    SignalSpec spec;
    spec.family = family;
    spec.parameters = std::move(parameters);
    spec.lipschitz_L0 = lipschitz_raw(family, spec.parameters);
    spec.amplitude_bound = cap;
    return spec;
}

SeriesSample sample_series(const SignalSpec& signal, double delta, double v, Index N,
                           const IndexSets& sets, std::uint64_t seed) {
    if (delta <= 0.0) throw invalid_config("sample_series: delta must be positive");
    if (v < 0.0) throw invalid_config("sample_series: noise variance must be >= 0");
    if (sets.N != N) throw invalid_config("sample_series: index sets built for different N");

    SeriesSample s;
    s.signal = signal;
    s.delta = delta;
    s.noise_variance = v;
    s.seed = seed;
    s.f = signal.sample_clean(N, delta);
    if (v > 0.0) {
        const double sd = std::sqrt(v);
        for (Index i = 0; i < N; ++i)
            s.f[i] += sd * rng::gaussian(rng::derive(seed, rng::tag("noise"), static_cast<std::uint64_t>(i)));
    }
    s.f_x.resize(static_cast<Index>(sets.I_x.size()));
    s.f_y.resize(static_cast<Index>(sets.I_y.size()));
    for (std::size_t k = 0; k < sets.I_x.size(); ++k) s.f_x[static_cast<Index>(k)] = s.f[sets.I_x[k]];
    for (std::size_t k = 0; k < sets.I_y.size(); ++k) s.f_y[static_cast<Index>(k)] = s.f[sets.I_y[k]];
    return s;
}

Dataset make_dataset(const std::vector<SignalSpec>& signals, Index per_signal, double delta,
                     double v, Index N, const IndexSets& sets, std::uint64_t seed) {
    if (signals.empty()) throw invalid_config("make_dataset: empty signal list");
    if (per_signal < 1) throw invalid_config("make_dataset: per_signal must be >= 1");

    Dataset ds;
    ds.index_sets = sets;
    for (std::size_t si = 0; si < signals.size(); ++si) {
        for (Index k = 0; k < per_signal; ++k) {
            std::uint64_t sub = rng::derive(seed, rng::tag("series"), static_cast<std::uint64_t>(si),
                                            static_cast<std::uint64_t>(k));
            SeriesSample cand;
            bool unique = false;
            for (int attempt = 0; attempt < 64 && !unique; ++attempt) {
                cand = sample_series(signals[si], delta, v, N, sets,
                                     rng::derive(sub, rng::tag("retry"), static_cast<std::uint64_t>(attempt)));
                unique = true;
                for (const SeriesSample& other : ds.samples) {
                    if ((cand.f.array() == other.f.array()).all()) {
                        if (v == 0.0)
                            throw invalid_config("make_dataset: duplicate series (identical specs, v=0)");
                        unique = false;
                        break;
                    }
                }
            }
            if (!unique) throw invalid_config("make_dataset: could not draw a distinct series");
            ds.samples.push_back(std::move(cand));
        }
    }
    return ds;
}

std::vector<SeriesSample> resample_set(const std::vector<SignalSpec>& signals,
                                       const IndexSets& sets, double delta, double v,
                                       Index count, std::uint64_t seed) {
    if (signals.empty()) throw invalid_config("resample_set: empty signal list");
    if (count < 1) throw invalid_config("resample_set: count must be >= 1");
    if (delta <= 0.0) throw invalid_config("resample_set: delta must be positive");
    if (v < 0.0) throw invalid_config("resample_set: noise variance must be >= 0");

    const Index N = sets.N;
    const double sd = std::sqrt(v);
    std::vector<SeriesSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
        const std::uint64_t pair = static_cast<std::uint64_t>(i / 2);
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        const SignalSpec& spec = signals[static_cast<std::size_t>(pair) % signals.size()];

        SeriesSample s;
        s.signal = spec;
        s.delta = delta;
        s.noise_variance = v;
        s.seed = seed;
        s.f = spec.sample_clean(N, delta);
        for (Index j = 0; j < N; ++j)
            s.f[j] += sign * sd *
                      rng::gaussian(rng::derive(seed, rng::tag("resample"), pair,
                                                static_cast<std::uint64_t>(j)));
        s.f_x.resize(static_cast<Index>(sets.I_x.size()));
        s.f_y.resize(static_cast<Index>(sets.I_y.size()));
        for (std::size_t k = 0; k < sets.I_x.size(); ++k)
            s.f_x[static_cast<Index>(k)] = s.f[sets.I_x[k]];
        for (std::size_t k = 0; k < sets.I_y.size(); ++k)
            s.f_y[static_cast<Index>(k)] = s.f[sets.I_y[k]];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace tsflow::data
