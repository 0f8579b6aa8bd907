#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsflow/check.hpp"
#include "tsflow/datamodel.hpp"
#include "tsflow/flow.hpp"
#include "tsflow/parallel.hpp"
#include "tsflow/polybasis.hpp"
#include "tsflow/types.hpp"

namespace tsflow::sampler {

// Gradient-descent view of the sampler: implicit parameter w = G^+ x and
// metric u(w) = 1/2 E_f |G w - f_y|^2, so grad u = G^T (G w - E[f_y]).
// G must have full column rank: the identities G^+ G = I and G^T G G^+ = G^T
// that tie the x-space recursion to plain gradient descent need it.
struct GdView {
    Matrix G;        // N_y x n
    Matrix G_pinv;   // n x N_y
    std::vector<data::SeriesSample> set;  // the expectation E_f runs over this set
    flow::FlowConfig cfg;
    double L1 = 0.0;  // measured smoothness |G^T G|_2
    Vector mean_f_y;  // E_f [f_y]

    Index n() const { return G.cols(); }
    Index N_y() const { return G.rows(); }
};

GdView make_view(Matrix G, std::vector<data::SeriesSample> set, flow::FlowConfig cfg);
GdView make_view(const poly::PolynomialBasis& basis, const data::IndexSets& sets,
                 std::vector<data::SeriesSample> set, flow::FlowConfig cfg);

// Full record of one sampler run. All lists have T+1 entries (index = step);
// noise_draws[0] and noise_draws[1] are zero by construction.
struct SampleTrace {
    std::vector<Vector> states;  // x_{t/T}
    std::vector<Vector> w_trace;
    std::vector<double> u_values;
    std::vector<double> grad_norm_sq;
    std::vector<Vector> noise_draws;
    std::uint64_t seed = 0;
    flow::FlowConfig cfg;
};

// The sampling loop, literal: x_0 ~ N(0, I); for t = 1..T draw z (only when
// t > 1 and noise_on), step x <- x - T field(x, f_x, (t-1)/T), then
// x <- x - sigma(t/T) z. Throws divergence_error (with the step index) when
// the state or its metric leaves the finite range.
SampleTrace run_algorithm1(const GdView& view, const flow::VectorFieldSpec& field,
                           const Vector& f_x, std::uint64_t seed, bool noise_on);

double metric_u(const GdView& view, const Vector& w);
Vector grad_u(const GdView& view, const Vector& w);

// w-space image of one sampler step at step index t in 1..T:
//   G^+ (T field(G w, f_x, (t-1)/T) + sigma(t/T) z)
// with f_x taken from the view's first series.
Vector delta_w(const GdView& view, const flow::VectorFieldSpec& field, const Vector& w, int t,
               const Vector& z);

// Realized one-step descent inequality
//   u(w_after) <= u(w_before) + ((L1/2) a^2 T^2 - a T) |grad u(w_before)|^2
//                 + (L1 n / 2) sigma_value
// Exact (tiny relative slack) for noise-free consecutive iterates.
CheckReport check_descent_step(const GdView& view, const Vector& w_before, const Vector& w_after,
                               double sigma_value);

// The same inequality in its native expectation form: Monte Carlo average of
// u(w - delta_w) over the w-space noise model z = G zeta / sqrt(sigma(t/T)),
// zeta ~ N(0, I_n), accepted within 4 standard errors.
CheckReport check_descent_expectation(const GdView& view, const flow::VectorFieldSpec& field,
                                      const Vector& w, int t, Index draws, std::uint64_t seed,
                                      exec_mode mode = exec_mode::serial);

// E[delta_w] = alpha T grad_u(w) for drift-only fields, any centered noise:
// plain z ~ N(0, I_{N_y}), per-component agreement within 4 standard errors.
CheckReport check_unbiased_update(const GdView& view, const flow::VectorFieldSpec& field,
                                  const Vector& w, int t, Index draws, std::uint64_t seed,
                                  exec_mode mode = exec_mode::serial);

// E|delta_w|^2 = a^2 T^2 |grad u|^2 + n sigma(t/T) under the w-space noise
// model z = G zeta / sqrt(sigma(t/T)); within 4 standard errors.
CheckReport check_update_norm(const GdView& view, const flow::VectorFieldSpec& field,
                              const Vector& w, int t, Index draws, std::uint64_t seed,
                              exec_mode mode = exec_mode::serial);

// |grad_u(w) - grad_u(w')| <= L1 |w - w'| over random pairs; exact for the
// quadratic metric, asserted with 1e-10 relative slack.
CheckReport check_smoothness(const GdView& view, Index num_pairs, std::uint64_t seed);

struct ConvergenceRow {
    int T = 0;
    double alpha = 0.0;
    double min_grad_norm_sq = 0.0;
    int steps_to_eps = -1;  // first step with |grad u|^2 <= eps, -1 if never
    bool diverged = false;
};

// For each T: noise-free run of the sampler with the drift-only oracle field
// (predicted target = E[f_y]) and alpha rescaled so alpha T = 1 / L1, the
// stable step size shared by every row (the trajectories are then prefixes of
// one another). Divergence is recorded per row, never thrown. Rows are
// independent and may run in parallel; results are order-deterministic.
std::vector<ConvergenceRow> convergence_experiment(const GdView& view,
                                                   const std::vector<int>& T_list, double eps,
                                                   std::uint64_t seed,
                                                   exec_mode mode = exec_mode::parallel);

// CSV exports. Headers: "t,x0..,w0..,u,grad_norm_sq" for traces and
// "T,alpha,min_grad_norm_sq,steps_to_eps,diverged" for convergence tables.
std::string trace_csv(const SampleTrace& trace);
std::string convergence_csv(const std::vector<ConvergenceRow>& rows);

}  // namespace tsflow::sampler
