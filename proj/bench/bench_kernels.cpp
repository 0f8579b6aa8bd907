// Serial vs parallel timing for the four batch kernels. Each kernel's two
// modes must agree bitwise (the parallel reductions are order-fixed), so the
// table also reports agreement alongside the speedup.

#include <chrono>
#include <cstdio>
#include <functional>

#include "tsflow/dit.hpp"
#include "tsflow/harness.hpp"
#include "tsflow/linalg.hpp"
#include "tsflow/predictor.hpp"
#include "tsflow/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = clock_type::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count() / reps;
}

void row(const char* name, double serial_ms, double parallel_ms, bool agree) {
    std::printf("%-22s %10.3f %12.3f %9.2fx   %s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, agree ? "bitwise" : "MISMATCH");
}

}  // namespace

int main() {
    using namespace tsflow;

    harness::ExperimentConfig cfg = harness::desk_default();
    cfg.data.per_signal = 64;  // widen the batch so the loops have real work
    const harness::Problem p = harness::build_problem(cfg);

    std::printf("%-22s %10s %12s %10s   %s\n", "kernel", "serial ms", "parallel ms", "speedup",
                "agreement");

    {
        const auto field = flow::VectorFieldSpec::conditional_target(
            p.ctx, p.dataset.samples[0], Vector::Zero(p.ctx.G.rows()));
        const Index mc = 256;
        double s_val = 0.0, par_val = 0.0;
        const double s_ms = time_ms(
            [&] { s_val = flow::fm_loss(p.ctx, field, p.dataset, cfg.flow, mc, 7,
                                        exec_mode::serial); },
            3);
        const double p_ms = time_ms(
            [&] { par_val = flow::fm_loss(p.ctx, field, p.dataset, cfg.flow, mc, 7,
                                          exec_mode::parallel); },
            3);
        row("fm_loss", s_ms, p_ms, s_val == par_val);
    }

    {
        const pred::RegularizedPredictor rp(p.basis, p.sets);
        const auto eval = data::resample_set(p.signals, p.sets, cfg.data.delta,
                                             cfg.data.noise_variance, 4096, 11);
        double s_val = 0.0, par_val = 0.0;
        const double s_ms =
            time_ms([&] { s_val = pred::predictor_risk(rp, eval, exec_mode::serial); }, 3);
        const double p_ms =
            time_ms([&] { par_val = pred::predictor_risk(rp, eval, exec_mode::parallel); }, 3);
        row("predictor_risk", s_ms, p_ms, s_val == par_val);
    }

    {
        std::vector<Matrix> mats;
        for (Index s = 0; s < 512; ++s)
            mats.push_back(rng::gaussian_matrix(24, 12, rng::derive(3, rng::tag("bench"), s)));
        std::vector<CheckReport> s_rep, p_rep;
        const double s_ms = time_ms(
            [&] { s_rep = linalg::check_norm_bound_batch(mats, exec_mode::serial); }, 3);
        const double p_ms = time_ms(
            [&] { p_rep = linalg::check_norm_bound_batch(mats, exec_mode::parallel); }, 3);
        bool agree = s_rep.size() == p_rep.size();
        for (std::size_t i = 0; agree && i < s_rep.size(); ++i)
            agree = s_rep[i].lhs == p_rep[i].lhs && s_rep[i].rhs == p_rep[i].rhs;
        row("pinv_norm_batch", s_ms, p_ms, agree);
    }

    {
        const Index N_y = cfg.data.N - cfg.data.N_x;
        const auto params = dit::make_dit_params(cfg.dit.L, cfg.dit.d, cfg.dit.K, cfg.dit.h,
                                                 cfg.dit.m, cfg.dit.r, N_y, cfg.data.N_x, 17,
                                                 cfg.dit.init_scale);
        const auto batch = dit::make_batch(p.ctx, p.dataset, cfg.flow, 512, 23);
        dit::DitParams g_s, g_p;
        double s_val = 0.0, par_val = 0.0;
        const double s_ms = time_ms(
            [&] { s_val = dit::batch_loss_and_grad(params, batch, g_s, exec_mode::serial); }, 3);
        const double p_ms = time_ms(
            [&] { par_val = dit::batch_loss_and_grad(params, batch, g_p, exec_mode::parallel); },
            3);
        row("dit_loss_and_grad", s_ms, p_ms,
            s_val == par_val && dit::to_json(g_s) == dit::to_json(g_p));
    }

    return 0;
}
