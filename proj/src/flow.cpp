#include "tsflow/flow.hpp"

#include <cmath>
#include <utility>

#include "tsflow/linalg.hpp"
#include "tsflow/rng.hpp"

namespace tsflow::flow {
namespace {

void require_time(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw invalid_input("flow: t must lie in [0, 1]");
}

}  // namespace

void FlowConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw invalid_config("FlowConfig: alpha must be in (0, 1]");
    if (!(sigma_min > 0.0 && sigma_min <= 1.0))
        throw invalid_config("FlowConfig: sigma_min must be in (0, 1]");
    if (T < 1) throw invalid_config("FlowConfig: T must be >= 1");
    if (ode_substeps < 4) throw invalid_config("FlowConfig: ode_substeps must be >= 4");
}

double sigma_t(const FlowConfig& cfg, double t) {
    cfg.validate();
    require_time(t);
    return 1.0 - (1.0 - cfg.sigma_min) * t;
}

FlowContext make_context(Matrix G) {
    require_finite(G, "make_context");
    FlowContext ctx;
    ctx.G_pinv = linalg::pinv(G);
    ctx.GGt = G * G.transpose();
    ctx.GGdag = G * ctx.G_pinv;
    ctx.G = std::move(G);
    return ctx;
}

FlowContext make_context(const poly::PolynomialBasis& basis, const data::IndexSets& sets) {
    return make_context(data::observation_matrix(sets.I_y, sets.N) * basis.P);
}

Vector mu_t(const FlowContext& ctx, const Vector& f_y, const FlowConfig& cfg, const Vector& z,
            double t) {
    cfg.validate();
    require_time(t);
    if (f_y.size() != ctx.G.rows() || z.size() != ctx.G.rows())
        throw invalid_input("mu_t: f_y/z must have N_y entries");

    Vector mu = Vector::Zero(ctx.G.rows());
    if (t == 0.0) return mu;

    const auto rhs = [&](double s, const Vector& m) -> Vector {
        const Vector psi = sigma_t(cfg, s) * z + m;
        return cfg.alpha * (ctx.GGt * (ctx.GGdag * psi - f_y));
    };

    const int steps = std::max(1, static_cast<int>(std::ceil(t * cfg.ode_substeps)));
    const double h = t / steps;
    for (int k = 0; k < steps; ++k) {
        const double s = h * k;
        const Vector k1 = rhs(s, mu);
        const Vector k2 = rhs(s + 0.5 * h, mu + 0.5 * h * k1);
        const Vector k3 = rhs(s + 0.5 * h, mu + 0.5 * h * k2);
        const Vector k4 = rhs(s + h, mu + h * k3);
        mu += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!all_finite(mu))
            throw divergence_error("mu_t: state blew up near time " + std::to_string(s + h), k);
    }
    return mu;
}

Vector psi_t(const FlowContext& ctx, const Vector& f_y, const FlowConfig& cfg, const Vector& z,
             double t) {
    return sigma_t(cfg, t) * z + mu_t(ctx, f_y, cfg, z, t);
}

Vector conditional_target_field(const FlowContext& ctx, const Vector& f_y, const FlowConfig& cfg,
                                const Vector& x, const Vector& z, double t) {
    cfg.validate();
    require_time(t);
    return cfg.alpha * (ctx.GGt * (ctx.GGdag * x - f_y)) + (cfg.sigma_min - 1.0) * z;
}

VectorFieldSpec VectorFieldSpec::conditional_target(const FlowContext& ctx,
                                                    const data::SeriesSample& series, Vector z) {
    VectorFieldSpec s;
    s.kind = Kind::conditional_target;
    s.ctx = &ctx;
    s.series = &series;
    s.z = std::move(z);
    return s;
}

VectorFieldSpec VectorFieldSpec::oracle(const FlowContext& ctx,
                                        std::function<Vector(const Vector&)> predict,
                                        bool with_state_term) {
    VectorFieldSpec s;
    s.kind = Kind::oracle;
    s.ctx = &ctx;
    s.predict = std::move(predict);
    s.with_state_term = with_state_term;
    return s;
}

VectorFieldSpec VectorFieldSpec::drift_only(const FlowContext& ctx,
                                            std::function<Vector(const Vector&)> predict) {
    VectorFieldSpec s = oracle(ctx, std::move(predict), false);
    s.kind = Kind::drift_only;
    return s;
}

VectorFieldSpec VectorFieldSpec::learned(
    std::function<Vector(const Vector&, const Vector&, double)> fn) {
    VectorFieldSpec s;
    s.kind = Kind::learned;
    s.eval_fn = std::move(fn);
    return s;
}

VectorFieldSpec VectorFieldSpec::zero() { return {}; }

VectorFieldSpec VectorFieldSpec::with_offset(Vector d) const {
    VectorFieldSpec s = *this;
    s.offset = std::move(d);
    return s;
}

Vector eval_field(const VectorFieldSpec& field, const FlowConfig& cfg, const Vector& x,
                  const Vector& f_x, double t) {
    Vector v;
    switch (field.kind) {
        case VectorFieldSpec::Kind::conditional_target:
            v = conditional_target_field(*field.ctx, field.series->f_y, cfg, x, field.z, t);
            break;
        case VectorFieldSpec::Kind::oracle:
        case VectorFieldSpec::Kind::drift_only: {
            v = cfg.alpha * (field.ctx->GGt * (field.ctx->GGdag * x - field.predict(f_x)));
            if (field.with_state_term) v += (cfg.sigma_min - 1.0) * x;
            break;
        }
        case VectorFieldSpec::Kind::learned:
            v = field.eval_fn(x, f_x, t);
            break;
        case VectorFieldSpec::Kind::zero:
            v = Vector::Zero(x.size());
            break;
    }
    if (field.offset.size() > 0) v += field.offset;
    return v;
}

McDraw mc_draw(const FlowContext& ctx, const data::Dataset& dataset, const FlowConfig& cfg,
               std::uint64_t seed, Index i) {
    if (dataset.size() == 0) throw invalid_input("mc_draw: empty dataset");
    const std::uint64_t u = static_cast<std::uint64_t>(i);
    McDraw d;
    d.series = &dataset.samples[rng::mix(rng::derive(seed, rng::tag("pick"), u)) %
                                static_cast<std::uint64_t>(dataset.size())];
    d.t = rng::uniform01(rng::derive(seed, rng::tag("time"), u));
    d.z = rng::gaussian_vector(ctx.G.rows(), rng::derive(seed, rng::tag("znoise"), u));
    d.psi = psi_t(ctx, d.series->f_y, cfg, d.z, d.t);
    d.target = conditional_target_field(ctx, d.series->f_y, cfg, d.psi, d.z, d.t);
    return d;
}

double fm_loss(const FlowContext& ctx, const VectorFieldSpec& field, const data::Dataset& dataset,
               const FlowConfig& cfg, Index mc_samples, std::uint64_t seed, exec_mode mode) {
    cfg.validate();
    if (mc_samples < 1) throw invalid_input("fm_loss: mc_samples must be >= 1");
    if (dataset.size() == 0) throw invalid_input("fm_loss: empty dataset");

    return ordered_mean(mc_samples, mode, [&](std::ptrdiff_t i) {
        const McDraw d = mc_draw(ctx, dataset, cfg, seed, i);
        Vector value;
        if (field.kind == VectorFieldSpec::Kind::conditional_target) {
            // the exact target conditioned on this draw's own (series, z)
            value = d.target;
            if (field.offset.size() > 0) value += field.offset;
        } else {
            value = eval_field(field, cfg, d.psi, d.series->f_x, d.t);
        }
        return (value - d.target).squaredNorm();
    });
}

}  // namespace tsflow::flow
