#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsflow/datamodel.hpp"
#include "tsflow/flow.hpp"
#include "tsflow/parallel.hpp"
#include "tsflow/types.hpp"

namespace tsflow::dit {

// One attention head; all four projections are d x m.
struct AttnHead {
    Matrix W_Q, W_K, W_V, W_O;
};

struct DitBlock {
    std::vector<AttnHead> heads;
    Matrix W1, W2;  // d x r
    Vector b1;      // r
    Vector b2;      // d
};

// Toy diffusion transformer: the (N_y + N_x + 1)-vector [x; f_x; t] is
// zero-padded to L*d, folded row-major into L x d, shifted by the trainable
// positional encoding E, pushed through K blocks (attention then
// feed-forward, both residual), flattened row-major, and the first N_y
// entries are the output.
struct DitParams {
    Index L = 0, d = 0;
    Index N_y = 0, N_x = 0;
    Matrix E;  // L x d
    std::vector<DitBlock> blocks;

    Index K() const { return static_cast<Index>(blocks.size()); }
    // shape consistency, L*d >= N_y + N_x + 1, finite entries
    void validate() const;
};

// Random small init for the projection weights (Gaussian * init_scale); E and
// the biases start at zero. All-zero weights are a saddle of the training
// loss (every gradient tensor vanishes there), so trainable instances must
// not start there; the identity examples use zeros_like instead.
DitParams make_dit_params(Index L, Index d, Index K, Index h, Index m, Index r, Index N_y,
                          Index N_x, std::uint64_t seed, double init_scale = 0.1);

// same shapes, every entry zero (also the gradient container)
DitParams zeros_like(const DitParams& p);

// row-wise softmax with max subtraction; rows sum to 1
Matrix softmax_rows(const Matrix& A);

// sum_i Softmax(X Wq_i Wk_i^T X^T) X Wv_i Wo_i^T + X
Matrix attn_forward(const DitBlock& block, const Matrix& X);

// ReLU(X W1 + 1 b1^T) W2^T + 1 b2^T + X
Matrix ff_forward(const DitBlock& block, const Matrix& X);

Vector dit_field(const DitParams& params, const Vector& x, const Vector& f_x, double t);

// Adapter into the flow module's field slot. Captures params by reference;
// the params must outlive the returned spec.
flow::VectorFieldSpec learned_field(const DitParams& params);

// A materialized Monte Carlo batch: the flow module's draws with psi and the
// exact target precomputed, so repeated loss evaluations (line search, finite
// differences) never re-integrate the mean ODE.
struct BatchItem {
    double t = 0.0;
    Vector f_x;
    Vector psi;
    Vector target;
};
using Batch = std::vector<BatchItem>;

Batch make_batch(const flow::FlowContext& ctx, const data::Dataset& dataset,
                 const flow::FlowConfig& cfg, Index mc_samples, std::uint64_t seed,
                 exec_mode mode = exec_mode::serial);

// mean_i |dit_field(params, psi_i, f_x_i, t_i) - target_i|^2; equals
// flow::fm_loss with the learned field bitwise for the same seed and count
double batch_loss(const DitParams& params, const Batch& batch,
                  exec_mode mode = exec_mode::serial);

// reverse-mode gradients of batch_loss for every parameter tensor; returns
// the loss
double batch_loss_and_grad(const DitParams& params, const Batch& batch, DitParams& grads,
                           exec_mode mode = exec_mode::serial);

struct TrainResult {
    DitParams params;
    std::vector<double> loss_history;  // fixed-eval-batch loss, length steps+1
};

// Plain gradient descent on the Monte Carlo flow-matching loss. Each step
// draws a fresh batch from the step-derived seed, takes the steepest step,
// and backtracks (halving the step) until the step-batch loss does not
// increase; the recorded history evaluates a fixed batch drawn once from the
// seed. steps = 0 or lr = 0 returns params bitwise unchanged. Non-finite
// loss raises divergence_error with the step index.
TrainResult train_dit(const DitParams& params, const flow::FlowContext& ctx,
                      const data::Dataset& dataset, const flow::FlowConfig& cfg, int steps,
                      double lr, Index mc_batch, std::uint64_t seed,
                      exec_mode mode = exec_mode::serial);

// shape-tagged nested-array JSON checkpoint; round-trips bitwise
std::string to_json(const DitParams& params);
DitParams dit_from_json(const std::string& text);

// CSV export, header "step,loss"
std::string loss_csv(const std::vector<double>& history);

}  // namespace tsflow::dit
