#include "tsflow/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "tsflow/format.hpp"
#include "tsflow/linalg.hpp"
#include "tsflow/rng.hpp"

namespace tsflow::sampler {
namespace {

void require_view_w(const GdView& view, const Vector& w, const char* who) {
    if (w.size() != view.n()) throw invalid_input(std::string(who) + ": w must have n entries");
}

// mean and standard error of a sample vector, accumulated in index order
struct MeanErr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

MeanErr mean_stderr(const std::vector<double>& xs) {
    const double m = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= m;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= (m > 1.0 ? m - 1.0 : 1.0);
    return {mean, std::sqrt(var / m)};
}

}  // namespace

GdView make_view(Matrix G, std::vector<data::SeriesSample> set, flow::FlowConfig cfg) {
    cfg.validate();
    require_finite(G, "make_view");
    if (set.empty()) throw invalid_input("make_view: empty series set");
    const double smax = linalg::spectral_norm(G);
    const double smin = G.rows() < G.cols() ? 0.0 : linalg::min_singular_value(G);
    if (smin <= 1e-10 * smax)
        throw rank_deficient("make_view: G must have full column rank");
    for (const auto& s : set)
        if (s.f_y.size() != G.rows()) throw invalid_input("make_view: f_y size mismatch");

    GdView view;
    view.G_pinv = linalg::pinv(G);
    view.L1 = smax * smax;  // |G^T G|_2 = sigma_max(G)^2
    view.mean_f_y = Vector::Zero(G.rows());
    for (const auto& s : set) view.mean_f_y += s.f_y;
    view.mean_f_y /= static_cast<double>(set.size());
    view.G = std::move(G);
    view.set = std::move(set);
    view.cfg = cfg;
    return view;
}

GdView make_view(const poly::PolynomialBasis& basis, const data::IndexSets& sets,
                 std::vector<data::SeriesSample> set, flow::FlowConfig cfg) {
    return make_view(data::observation_matrix(sets.I_y, sets.N) * basis.P, std::move(set),
                     std::move(cfg));
}

SampleTrace run_algorithm1(const GdView& view, const flow::VectorFieldSpec& field,
                           const Vector& f_x, std::uint64_t seed, bool noise_on) {
    view.cfg.validate();
    const int T = view.cfg.T;
    const Index N_y = view.N_y();

    SampleTrace trace;
    trace.seed = seed;
    trace.cfg = view.cfg;
    trace.states.reserve(T + 1);
    trace.w_trace.reserve(T + 1);
    trace.u_values.reserve(T + 1);
    trace.grad_norm_sq.reserve(T + 1);
    trace.noise_draws.reserve(T + 1);

    const auto record = [&](const Vector& x, Vector z, int step) {
        Vector w = view.G_pinv * x;
        const double u = metric_u(view, w);
        const double g2 = grad_u(view, w).squaredNorm();
        if (!std::isfinite(u) || !std::isfinite(g2))
            throw divergence_error("run_algorithm1: metric overflow", step);
        trace.states.push_back(x);
        trace.w_trace.push_back(std::move(w));
        trace.u_values.push_back(u);
        trace.grad_norm_sq.push_back(g2);
        trace.noise_draws.push_back(std::move(z));
    };

    Vector x = rng::gaussian_vector(N_y, rng::derive(seed, rng::tag("x0")));
    record(x, Vector::Zero(N_y), 0);

    for (int t = 1; t <= T; ++t) {
        Vector z = Vector::Zero(N_y);
        if (t > 1 && noise_on)
            z = rng::gaussian_vector(
                N_y, rng::derive(seed, rng::tag("step_noise"), static_cast<std::uint64_t>(t)));
        x -= static_cast<double>(T) *
             flow::eval_field(field, view.cfg, x, f_x, static_cast<double>(t - 1) / T);
        x -= flow::sigma_t(view.cfg, static_cast<double>(t) / T) * z;
        if (!all_finite(x)) throw divergence_error("run_algorithm1: state blew up", t);
        record(x, std::move(z), t);
    }
    return trace;
}

double metric_u(const GdView& view, const Vector& w) {
    require_view_w(view, w, "metric_u");
    const Vector Gw = view.G * w;
    double acc = 0.0;
    for (const auto& s : view.set) acc += (Gw - s.f_y).squaredNorm();
    return 0.5 * acc / static_cast<double>(view.set.size());
}

Vector grad_u(const GdView& view, const Vector& w) {
    require_view_w(view, w, "grad_u");
    return view.G.transpose() * (view.G * w - view.mean_f_y);
}

Vector delta_w(const GdView& view, const flow::VectorFieldSpec& field, const Vector& w, int t,
               const Vector& z) {
    require_view_w(view, w, "delta_w");
    if (t < 1 || t > view.cfg.T) throw invalid_input("delta_w: step index must be in 1..T");
    const double T = static_cast<double>(view.cfg.T);
    const Vector F =
        flow::eval_field(field, view.cfg, view.G * w, view.set.front().f_x, (t - 1.0) / T);
    return view.G_pinv * (T * F + flow::sigma_t(view.cfg, t / T) * z);
}

CheckReport check_descent_step(const GdView& view, const Vector& w_before, const Vector& w_after,
                               double sigma_value) {
    const double aT = view.cfg.alpha * view.cfg.T;
    const double g2 = grad_u(view, w_before).squaredNorm();

    CheckReport rep;
    rep.name = "descent_step";
    rep.note =
        "u(w_t) <= u(w_{t-1}) + ((L1/2) a^2 T^2 - a T) |grad u|^2 + (L1 n / 2) sigma";
    rep.lhs = metric_u(view, w_after);
    rep.rhs = metric_u(view, w_before) + (0.5 * view.L1 * aT * aT - aT) * g2 +
              0.5 * view.L1 * static_cast<double>(view.n()) * sigma_value;
    rep.stat("grad_norm_sq", g2);
    rep.stat("alpha_T", aT);
    rep.stat("sigma", sigma_value);
    rep.pass = rep.lhs <= rep.rhs + 1e-12 * (1.0 + std::abs(rep.rhs));
    return rep;
}

CheckReport check_descent_expectation(const GdView& view, const flow::VectorFieldSpec& field,
                                      const Vector& w, int t, Index draws, std::uint64_t seed,
                                      exec_mode mode) {
    require_view_w(view, w, "check_descent_expectation");
    if (draws < 2) throw invalid_input("check_descent_expectation: draws must be >= 2");
    const double sigma = flow::sigma_t(view.cfg, static_cast<double>(t) / view.cfg.T);
    const double root = std::sqrt(sigma);

    std::vector<double> u_after(static_cast<std::size_t>(draws));
    parallel_for(draws, mode, [&](std::ptrdiff_t j) {
        const Vector zeta =
            rng::gaussian_vector(view.n(), rng::derive(seed, rng::tag("zeta"),
                                                       static_cast<std::uint64_t>(j)));
        const Vector z = (view.G * zeta) / root;
        u_after[static_cast<std::size_t>(j)] = metric_u(view, w - delta_w(view, field, w, t, z));
    });
    const MeanErr me = mean_stderr(u_after);

    const double aT = view.cfg.alpha * view.cfg.T;
    const double g2 = grad_u(view, w).squaredNorm();
    CheckReport rep;
    rep.name = "descent_expectation";
    rep.note =
        "E u(w - dw) <= u(w) + ((L1/2) a^2 T^2 - a T) |grad u|^2 + (L1 n / 2) sigma(t/T)";
    rep.lhs = me.mean;
    rep.rhs = metric_u(view, w) + (0.5 * view.L1 * aT * aT - aT) * g2 +
              0.5 * view.L1 * static_cast<double>(view.n()) * sigma;
    rep.stat("stderr", me.stderr_);
    rep.stat("sigma", sigma);
    rep.stat("draws", static_cast<double>(draws));
    rep.pass = rep.lhs <= rep.rhs + 4.0 * me.stderr_;
    return rep;
}

CheckReport check_unbiased_update(const GdView& view, const flow::VectorFieldSpec& field,
                                  const Vector& w, int t, Index draws, std::uint64_t seed,
                                  exec_mode mode) {
    require_view_w(view, w, "check_unbiased_update");
    if (draws < 2) throw invalid_input("check_unbiased_update: draws must be >= 2");
    const Index n = view.n();

    Matrix D(draws, n);
    parallel_for(draws, mode, [&](std::ptrdiff_t j) {
        const Vector z =
            rng::gaussian_vector(view.N_y(), rng::derive(seed, rng::tag("znoise"),
                                                         static_cast<std::uint64_t>(j)));
        D.row(j) = delta_w(view, field, w, t, z).transpose();
    });

    const Vector expect = view.cfg.alpha * view.cfg.T * grad_u(view, w);
    double worst = 0.0;
    double worst_stderr = 0.0;
    for (Index c = 0; c < n; ++c) {
        double mean = 0.0;
        for (Index j = 0; j < draws; ++j) mean += D(j, c);
        mean /= static_cast<double>(draws);
        double var = 0.0;
        for (Index j = 0; j < draws; ++j) var += (D(j, c) - mean) * (D(j, c) - mean);
        var /= static_cast<double>(draws - 1);
        const double se = std::sqrt(var / static_cast<double>(draws));
        const double ratio = std::abs(mean - expect[c]) / (se > 0.0 ? se : 1.0);
        if (ratio > worst) {
            worst = ratio;
            worst_stderr = se;
        }
    }

    CheckReport rep;
    rep.name = "unbiased_update";
    rep.note = "per-component |mean(delta_w) - alpha T grad u| <= 4 stderr";
    rep.lhs = worst;
    rep.rhs = 4.0;
    rep.stat("draws", static_cast<double>(draws));
    rep.stat("worst_stderr", worst_stderr);
    rep.pass = worst <= 4.0;
    return rep;
}

CheckReport check_update_norm(const GdView& view, const flow::VectorFieldSpec& field,
                              const Vector& w, int t, Index draws, std::uint64_t seed,
                              exec_mode mode) {
    require_view_w(view, w, "check_update_norm");
    if (draws < 2) throw invalid_input("check_update_norm: draws must be >= 2");
    const double sigma = flow::sigma_t(view.cfg, static_cast<double>(t) / view.cfg.T);
    const double root = std::sqrt(sigma);

    std::vector<double> norm_sq(static_cast<std::size_t>(draws));
    parallel_for(draws, mode, [&](std::ptrdiff_t j) {
        const Vector zeta =
            rng::gaussian_vector(view.n(), rng::derive(seed, rng::tag("zeta"),
                                                       static_cast<std::uint64_t>(j)));
        const Vector z = (view.G * zeta) / root;
        norm_sq[static_cast<std::size_t>(j)] = delta_w(view, field, w, t, z).squaredNorm();
    });
    const MeanErr me = mean_stderr(norm_sq);

    const double aT = view.cfg.alpha * view.cfg.T;
    CheckReport rep;
    rep.name = "update_norm";
    rep.note = "E |delta_w|^2 = a^2 T^2 |grad u|^2 + n sigma(t/T)";
    rep.lhs = me.mean;
    rep.rhs = aT * aT * grad_u(view, w).squaredNorm() + static_cast<double>(view.n()) * sigma;
    rep.stat("stderr", me.stderr_);
    rep.stat("sigma", sigma);
    rep.stat("draws", static_cast<double>(draws));
    rep.pass = std::abs(rep.lhs - rep.rhs) <= 4.0 * me.stderr_;
    return rep;
}

CheckReport check_smoothness(const GdView& view, Index num_pairs, std::uint64_t seed) {
    if (num_pairs < 1) throw invalid_input("check_smoothness: num_pairs must be >= 1");
    double worst = 0.0;
    for (Index j = 0; j < num_pairs; ++j) {
        const auto u = static_cast<std::uint64_t>(j);
        const Vector w = rng::gaussian_vector(view.n(), rng::derive(seed, rng::tag("w"), u));
        const Vector wp = rng::gaussian_vector(view.n(), rng::derive(seed, rng::tag("wp"), u));
        const double gap = (grad_u(view, w) - grad_u(view, wp)).norm();
        const double bound = view.L1 * (w - wp).norm();
        if (bound > 0.0) worst = std::max(worst, gap / bound);
    }

    CheckReport rep;
    rep.name = "smoothness";
    rep.note = "|grad u(w) - grad u(w')| <= L1 |w - w'|, L1 = |G^T G|_2";
    rep.lhs = worst;
    rep.rhs = 1.0;
    rep.stat("L1", view.L1);
    rep.stat("pairs", static_cast<double>(num_pairs));
    rep.pass = worst <= 1.0 + 1e-10;
    return rep;
}

std::vector<ConvergenceRow> convergence_experiment(const GdView& view,
                                                   const std::vector<int>& T_list, double eps,
                                                   std::uint64_t seed, exec_mode mode) {
    if (T_list.empty()) throw invalid_input("convergence_experiment: empty T_list");
    for (int T : T_list)
        if (T < 1) throw invalid_input("convergence_experiment: T values must be >= 1");

    std::vector<ConvergenceRow> rows(T_list.size());
    parallel_for(static_cast<Index>(T_list.size()), mode, [&](std::ptrdiff_t i) {
        GdView row_view = view;
        row_view.cfg.T = T_list[static_cast<std::size_t>(i)];
        // alpha*T = 1/L1 for every row, so the trajectories are prefixes of one
        // another and the running minimum is non-increasing in T
        row_view.cfg.alpha = 1.0 / (view.L1 * row_view.cfg.T);

        const flow::FlowContext ctx = flow::make_context(view.G);
        const Vector target = view.mean_f_y;
        const auto field = flow::VectorFieldSpec::drift_only(
            ctx, [&target](const Vector&) { return target; });

        ConvergenceRow row;
        row.T = row_view.cfg.T;
        row.alpha = row_view.cfg.alpha;
        row.min_grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
        try {
            const SampleTrace trace =
                run_algorithm1(row_view, field, view.set.front().f_x, seed, false);
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < trace.grad_norm_sq.size(); ++t) {
                best = std::min(best, trace.grad_norm_sq[t]);
                if (row.steps_to_eps < 0 && trace.grad_norm_sq[t] <= eps)
                    row.steps_to_eps = static_cast<int>(t);
            }
            row.min_grad_norm_sq = best;
        } catch (const divergence_error&) {
            row.diverged = true;
        }
        rows[static_cast<std::size_t>(i)] = row;
    });
    return rows;
}

std::string trace_csv(const SampleTrace& trace) {
    if (trace.states.empty()) throw invalid_input("trace_csv: empty trace");
    const Index N_y = trace.states.front().size();
    const Index n = trace.w_trace.front().size();

    std::string out = "t";
    for (Index i = 0; i < N_y; ++i) out += ",x" + std::to_string(i);
    for (Index i = 0; i < n; ++i) out += ",w" + std::to_string(i);
    out += ",u,grad_norm_sq\n";
    for (std::size_t t = 0; t < trace.states.size(); ++t) {
        out += std::to_string(t);
        for (Index i = 0; i < N_y; ++i) out += "," + fmt_double(trace.states[t][i]);
        for (Index i = 0; i < n; ++i) out += "," + fmt_double(trace.w_trace[t][i]);
        out += "," + fmt_double(trace.u_values[t]);
        out += "," + fmt_double(trace.grad_norm_sq[t]);
        out += "\n";
    }
    return out;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
    std::string out = "T,alpha,min_grad_norm_sq,steps_to_eps,diverged\n";
    for (const auto& r : rows) {
        out += std::to_string(r.T);
        out += "," + fmt_double(r.alpha);
        out += "," + fmt_double(r.min_grad_norm_sq);
        out += "," + std::to_string(r.steps_to_eps);
        out += ",";
        out += (r.diverged ? "1" : "0");
        out += "\n";
    }
    return out;
}

}  // namespace tsflow::sampler
