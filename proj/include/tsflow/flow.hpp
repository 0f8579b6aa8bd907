#pragma once

#include <cstdint>
#include <functional>

#include "tsflow/datamodel.hpp"
#include "tsflow/parallel.hpp"
#include "tsflow/polybasis.hpp"
#include "tsflow/types.hpp"

namespace tsflow::flow {

struct FlowConfig {
    double alpha = 0.5;      // drift strength, in (0,1]
    double sigma_min = 0.5;  // terminal noise scale, in (0,1]
    int T = 64;              // sampler step count, >= 1
    int ode_substeps = 64;   // mean-ODE resolution per unit time, >= 4

    void validate() const;
};

// sigma(t) = 1 - (1 - sigma_min) t, affine from 1 at t=0 to sigma_min at t=1
double sigma_t(const FlowConfig& cfg, double t);

// Cached operators of the restricted basis G = M(I_y) P. Every drift term
// acts through G G^T and the range projector G G^+.
struct FlowContext {
    Matrix G;       // N_y x n
    Matrix G_pinv;  // n x N_y
    Matrix GGt;     // G G^T
    Matrix GGdag;   // G G^+
};

FlowContext make_context(Matrix G);
FlowContext make_context(const poly::PolynomialBasis& basis, const data::IndexSets& sets);

// Mean path: integrates mu' = alpha GG^T (GG^+ psi_s - f_y) from mu_0 = 0 with
// classical 4th-order steps, substituting psi_s = sigma_s z + mu_s at every
// stage. Step count ceil(t * ode_substeps), at least 1 for t > 0.
// Throws divergence_error if the state leaves the finite range.
Vector mu_t(const FlowContext& ctx, const Vector& f_y, const FlowConfig& cfg, const Vector& z,
            double t);

// psi(t) = sigma(t) z + mu(t); equals z exactly at t = 0
Vector psi_t(const FlowContext& ctx, const Vector& f_y, const FlowConfig& cfg, const Vector& z,
             double t);

// Exact time derivative of psi given its own state and noise:
//   alpha GG^T (GG^+ x - f_y) + (sigma_min - 1) z
Vector conditional_target_field(const FlowContext& ctx, const Vector& f_y, const FlowConfig& cfg,
                                const Vector& x, const Vector& z, double t);

// A vector field (x, f_x, t) -> R^{N_y}. Referenced contexts, series, and
// callables must outlive this object. `offset`, when non-empty, is added to
// every evaluation (used by the stationarity perturbation check).
struct VectorFieldSpec {
    enum class Kind { conditional_target, oracle, drift_only, learned, zero };

    Kind kind = Kind::zero;
    const FlowContext* ctx = nullptr;
    const data::SeriesSample* series = nullptr;            // conditional_target
    Vector z;                                              // conditional_target noise slot
    std::function<Vector(const Vector&)> predict;          // oracle / drift_only
    bool with_state_term = false;                          // oracle
    std::function<Vector(const Vector&, const Vector&, double)> eval_fn;  // learned
    Vector offset;

    // exact target for a fixed (series, z) conditioning pair
    static VectorFieldSpec conditional_target(const FlowContext& ctx,
                                              const data::SeriesSample& series, Vector z);
    // alpha GG^T (GG^+ x - predict(f_x)) [+ (sigma_min - 1) x when with_state_term]
    static VectorFieldSpec oracle(const FlowContext& ctx,
                                  std::function<Vector(const Vector&)> predict,
                                  bool with_state_term);
    static VectorFieldSpec drift_only(const FlowContext& ctx,
                                      std::function<Vector(const Vector&)> predict);
    static VectorFieldSpec learned(std::function<Vector(const Vector&, const Vector&, double)> fn);
    static VectorFieldSpec zero();

    VectorFieldSpec with_offset(Vector d) const;
};

Vector eval_field(const VectorFieldSpec& field, const FlowConfig& cfg, const Vector& x,
                  const Vector& f_x, double t);

// One Monte Carlo conditioning draw: a series pick, uniform t, Gaussian z,
// the path point psi_t and the exact target there. Pure in (seed, i), so
// trainers can rebuild the identical draws the loss below uses.
struct McDraw {
    const data::SeriesSample* series = nullptr;
    double t = 0.0;
    Vector z;
    Vector psi;
    Vector target;
};

McDraw mc_draw(const FlowContext& ctx, const data::Dataset& dataset, const FlowConfig& cfg,
               std::uint64_t seed, Index i);

// Monte Carlo flow-matching objective: mean over mc_samples draws of
//   |field(psi_t(f), f_x, t) - d psi_t(f)/dt|^2
// with z standard normal, t uniform on [0,1], f uniform over the dataset.
// A conditional_target field is evaluated with each draw's own (f, z), making
// the self-comparison exactly zero. Deterministic given the seed; parallel
// and serial modes agree bitwise.
double fm_loss(const FlowContext& ctx, const VectorFieldSpec& field, const data::Dataset& dataset,
               const FlowConfig& cfg, Index mc_samples, std::uint64_t seed,
               exec_mode mode = exec_mode::serial);

}  // namespace tsflow::flow
