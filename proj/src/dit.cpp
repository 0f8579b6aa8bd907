#include "tsflow/dit.hpp"

#include <cmath>
#include <utility>

#include "json.hpp"

#include "tsflow/format.hpp"
#include "tsflow/rng.hpp"

namespace tsflow::dit {
namespace {

using nlohmann::json;

// visit every trainable tensor of a params/grads pair in a fixed order
template <class F>
void zip_tensors(DitParams& a, const DitParams& b, F&& f) {
    f(a.E, b.E);
    for (std::size_t k = 0; k < a.blocks.size(); ++k) {
        for (std::size_t i = 0; i < a.blocks[k].heads.size(); ++i) {
            f(a.blocks[k].heads[i].W_Q, b.blocks[k].heads[i].W_Q);
            f(a.blocks[k].heads[i].W_K, b.blocks[k].heads[i].W_K);
            f(a.blocks[k].heads[i].W_V, b.blocks[k].heads[i].W_V);
            f(a.blocks[k].heads[i].W_O, b.blocks[k].heads[i].W_O);
        }
        f(a.blocks[k].W1, b.blocks[k].W1);
        f(a.blocks[k].W2, b.blocks[k].W2);
        f(a.blocks[k].b1, b.blocks[k].b1);
        f(a.blocks[k].b2, b.blocks[k].b2);
    }
}

DitParams axpy(const DitParams& p, const DitParams& g, double c) {
    DitParams out = p;
    zip_tensors(out, g, [c](auto& x, const auto& y) { x += c * y; });
    return out;
}

void check_attn_shapes(const DitBlock& block, const Matrix& X) {
    if (block.heads.empty()) throw invalid_input("attn_forward: block has no heads");
    const Index d = X.cols();
    const Index m = block.heads.front().W_Q.cols();
    for (const auto& h : block.heads) {
        const bool ok = h.W_Q.rows() == d && h.W_K.rows() == d && h.W_V.rows() == d &&
                        h.W_O.rows() == d && h.W_Q.cols() == m && h.W_K.cols() == m &&
                        h.W_V.cols() == m && h.W_O.cols() == m;
        if (!ok) throw invalid_input("attn_forward: head projection shape mismatch");
    }
}

void check_ff_shapes(const DitBlock& block, const Matrix& X) {
    const Index d = X.cols();
    const Index r = block.W1.cols();
    const bool ok = block.W1.rows() == d && block.W2.rows() == d && block.W2.cols() == r &&
                    block.b1.size() == r && block.b2.size() == d;
    if (!ok) throw invalid_input("ff_forward: feed-forward shape mismatch");
}

struct HeadCache {
    Matrix Q, K, V;  // L x m
    Matrix S;        // L x L, softmax rows
    Matrix B;        // S V, L x m
};

struct BlockCache {
    Matrix X_in;  // input to attention
    std::vector<HeadCache> heads;
    Matrix Y;      // attention output = feed-forward input
    Matrix H_pre;  // Y W1 + 1 b1^T
    Matrix H;      // ReLU(H_pre)
};

Matrix attn_forward_cached(const DitBlock& block, const Matrix& X, BlockCache& cache) {
    check_attn_shapes(block, X);
    cache.X_in = X;
    cache.heads.resize(block.heads.size());
    Matrix out = X;
    for (std::size_t i = 0; i < block.heads.size(); ++i) {
        const AttnHead& h = block.heads[i];
        HeadCache& hc = cache.heads[i];
        hc.Q = X * h.W_Q;
        hc.K = X * h.W_K;
        hc.V = X * h.W_V;
        hc.S = softmax_rows(hc.Q * hc.K.transpose());
        hc.B = hc.S * hc.V;
        out += hc.B * h.W_O.transpose();
    }
    return out;
}

Matrix ff_forward_cached(const DitBlock& block, const Matrix& Y, BlockCache& cache) {
    check_ff_shapes(block, Y);
    cache.Y = Y;
    cache.H_pre = Y * block.W1;
    cache.H_pre.rowwise() += block.b1.transpose();
    cache.H = cache.H_pre.cwiseMax(0.0);
    Matrix out = cache.H * block.W2.transpose();
    out.rowwise() += block.b2.transpose();
    out += Y;
    return out;
}

// folded input plus positional encoding
Matrix embed(const DitParams& p, const Vector& x, const Vector& f_x, double t) {
    if (x.size() != p.N_y || f_x.size() != p.N_x)
        throw invalid_input("dit_field: input sizes do not match the reshape spec");
    Matrix X = p.E;
    const Index total = p.N_y + p.N_x + 1;
    for (Index k = 0; k < total; ++k) {
        const double v = k < p.N_y ? x[k] : (k < p.N_y + p.N_x ? f_x[k - p.N_y] : t);
        X(k / p.d, k % p.d) += v;
    }
    return X;
}

struct ForwardCache {
    std::vector<BlockCache> blocks;
};

Vector forward_cached(const DitParams& p, const Vector& x, const Vector& f_x, double t,
                      ForwardCache& cache) {
    Matrix X = embed(p, x, f_x, t);
    cache.blocks.resize(p.blocks.size());
    for (std::size_t k = 0; k < p.blocks.size(); ++k) {
        const Matrix Y = attn_forward_cached(p.blocks[k], X, cache.blocks[k]);
        X = ff_forward_cached(p.blocks[k], Y, cache.blocks[k]);
    }
    Vector out(p.N_y);
    for (Index k = 0; k < p.N_y; ++k) out[k] = X(k / p.d, k % p.d);
    return out;
}

// reverse-mode pass; writes fresh gradients into g (zeroed by the caller)
void backward(const DitParams& p, const ForwardCache& cache, const Vector& dOut, DitParams& g) {
    Matrix dX = Matrix::Zero(p.L, p.d);
    for (Index k = 0; k < p.N_y; ++k) dX(k / p.d, k % p.d) = dOut[k];

    for (std::size_t k = p.blocks.size(); k-- > 0;) {
        const DitBlock& b = p.blocks[k];
        const BlockCache& c = cache.blocks[k];
        DitBlock& gb = g.blocks[k];

        // feed-forward: out = ReLU(Y W1 + 1 b1^T) W2^T + 1 b2^T + Y
        Matrix dH = dX * b.W2;
        dH.array() *= (c.H_pre.array() > 0.0).cast<double>();
        gb.W2 += dX.transpose() * c.H;
        gb.b2 += dX.colwise().sum().transpose();
        gb.W1 += c.Y.transpose() * dH;
        gb.b1 += dH.colwise().sum().transpose();
        Matrix dY = dX + dH * b.W1.transpose();

        // attention: Y = sum_i S_i (X W_V^i) W_O^i^T + X
        Matrix dXin = dY;
        for (std::size_t i = 0; i < b.heads.size(); ++i) {
            const AttnHead& h = b.heads[i];
            const HeadCache& hc = c.heads[i];
            AttnHead& gh = gb.heads[i];

            const Matrix dB = dY * h.W_O;
            gh.W_O += dY.transpose() * hc.B;
            const Matrix dS = dB * hc.V.transpose();
            const Matrix dV = hc.S.transpose() * dB;
            gh.W_V += c.X_in.transpose() * dV;
            dXin += dV * h.W_V.transpose();

            // softmax rows: dA = S o (dS - rowsum(dS o S))
            Matrix dA(hc.S.rows(), hc.S.cols());
            for (Index l = 0; l < hc.S.rows(); ++l) {
                const double dot = dS.row(l).dot(hc.S.row(l));
                dA.row(l) = (hc.S.row(l).array() * (dS.row(l).array() - dot)).matrix();
            }
            const Matrix dQ = dA * hc.K;
            const Matrix dK = dA.transpose() * hc.Q;
            gh.W_Q += c.X_in.transpose() * dQ;
            gh.W_K += c.X_in.transpose() * dK;
            dXin += dQ * h.W_Q.transpose() + dK * h.W_K.transpose();
        }
        dX = std::move(dXin);
    }
    g.E += dX;
}

json matrix_json(const Matrix& M) {
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from_json(const json& j, const char* what) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw invalid_input(std::string("checkpoint: ") + what + " is not shape-tagged");
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows))
        throw invalid_input(std::string("checkpoint: ") + what + " shape tag mismatch");
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const json& row = data.at(static_cast<std::size_t>(i));
        if (row.size() != static_cast<std::size_t>(cols))
            throw invalid_input(std::string("checkpoint: ") + what + " shape tag mismatch");
        for (Index j2 = 0; j2 < cols; ++j2)
            M(i, j2) = row.at(static_cast<std::size_t>(j2)).get<double>();
    }
    return M;
}

json vector_json(const Vector& v) {
    json arr = json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return json{{"size", v.size()}, {"data", std::move(arr)}};
}

Vector vector_from_json(const json& j, const char* what) {
    if (!j.is_object() || !j.contains("size") || !j.contains("data"))
        throw invalid_input(std::string("checkpoint: ") + what + " is not shape-tagged");
    const Index n = j.at("size").get<Index>();
    const json& data = j.at("data");
    if (n < 0 || data.size() != static_cast<std::size_t>(n))
        throw invalid_input(std::string("checkpoint: ") + what + " shape tag mismatch");
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = data.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

}  // namespace

void DitParams::validate() const {
    if (L < 1 || d < 1) throw invalid_config("DitParams: L and d must be >= 1");
    if (N_y < 1 || N_x < 0) throw invalid_config("DitParams: readout sizes must be N_y >= 1, N_x >= 0");
    if (L * d < N_y + N_x + 1)
        throw invalid_config("DitParams: L*d must cover the folded (N_y + N_x + 1)-vector");
    if (E.rows() != L || E.cols() != d || !E.allFinite())
        throw invalid_config("DitParams: positional encoding must be a finite L x d matrix");
    if (blocks.empty()) throw invalid_config("DitParams: at least one block");
    for (const auto& b : blocks) {
        if (b.heads.empty()) throw invalid_config("DitParams: every block needs a head");
        const Index m = b.heads.front().W_Q.cols();
        if (m < 1) throw invalid_config("DitParams: head width must be >= 1");
        for (const auto& h : b.heads) {
            const bool ok = h.W_Q.rows() == d && h.W_K.rows() == d && h.W_V.rows() == d &&
                            h.W_O.rows() == d && h.W_Q.cols() == m && h.W_K.cols() == m &&
                            h.W_V.cols() == m && h.W_O.cols() == m && h.W_Q.allFinite() &&
                            h.W_K.allFinite() && h.W_V.allFinite() && h.W_O.allFinite();
            if (!ok) throw invalid_config("DitParams: head projections must be finite d x m");
        }
        const Index r = b.W1.cols();
        const bool ok = r >= 1 && b.W1.rows() == d && b.W2.rows() == d && b.W2.cols() == r &&
                        b.b1.size() == r && b.b2.size() == d && b.W1.allFinite() &&
                        b.W2.allFinite() && b.b1.allFinite() && b.b2.allFinite();
        if (!ok) throw invalid_config("DitParams: feed-forward tensors must be finite d x r");
    }
}

DitParams make_dit_params(Index L, Index d, Index K, Index h, Index m, Index r, Index N_y,
                          Index N_x, std::uint64_t seed, double init_scale) {
    if (K < 1 || h < 1 || m < 1 || r < 1)
        throw invalid_config("make_dit_params: K, h, m, r must be >= 1");
    if (!(init_scale > 0.0) || !std::isfinite(init_scale))
        throw invalid_config("make_dit_params: init_scale must be positive");
    DitParams p;
    p.L = L;
    p.d = d;
    p.N_y = N_y;
    p.N_x = N_x;
    p.E = Matrix::Zero(L, d);
    p.blocks.resize(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k) {
        DitBlock& b = p.blocks[static_cast<std::size_t>(k)];
        b.heads.resize(static_cast<std::size_t>(h));
        const auto uk = static_cast<std::uint64_t>(k);
        for (Index i = 0; i < h; ++i) {
            const auto ui = static_cast<std::uint64_t>(i);
            AttnHead& head = b.heads[static_cast<std::size_t>(i)];
            head.W_Q = init_scale * rng::gaussian_matrix(d, m, rng::derive(seed, rng::tag("Wq"), uk, ui));
            head.W_K = init_scale * rng::gaussian_matrix(d, m, rng::derive(seed, rng::tag("Wk"), uk, ui));
            head.W_V = init_scale * rng::gaussian_matrix(d, m, rng::derive(seed, rng::tag("Wv"), uk, ui));
            head.W_O = init_scale * rng::gaussian_matrix(d, m, rng::derive(seed, rng::tag("Wo"), uk, ui));
        }
        b.W1 = init_scale * rng::gaussian_matrix(d, r, rng::derive(seed, rng::tag("W1"), uk));
        b.W2 = init_scale * rng::gaussian_matrix(d, r, rng::derive(seed, rng::tag("W2"), uk));
        b.b1 = Vector::Zero(r);
        b.b2 = Vector::Zero(d);
    }
    p.validate();
    return p;
}

DitParams zeros_like(const DitParams& p) {
    DitParams out = p;
    zip_tensors(out, p, [](auto& x, const auto&) { x.setZero(); });
    return out;
}

Matrix softmax_rows(const Matrix& A) {
    Matrix S(A.rows(), A.cols());
    for (Index l = 0; l < A.rows(); ++l) {
        const double m = A.row(l).maxCoeff();
        S.row(l) = (A.row(l).array() - m).exp();
        S.row(l) /= S.row(l).sum();
    }
    return S;
}

Matrix attn_forward(const DitBlock& block, const Matrix& X) {
    BlockCache scratch;
    return attn_forward_cached(block, X, scratch);
}

Matrix ff_forward(const DitBlock& block, const Matrix& X) {
    BlockCache scratch;
    return ff_forward_cached(block, X, scratch);
}

Vector dit_field(const DitParams& params, const Vector& x, const Vector& f_x, double t) {
    ForwardCache scratch;
    return forward_cached(params, x, f_x, t, scratch);
}

flow::VectorFieldSpec learned_field(const DitParams& params) {
    return flow::VectorFieldSpec::learned([&params](const Vector& x, const Vector& f_x, double t) {
        return dit_field(params, x, f_x, t);
    });
}

Batch make_batch(const flow::FlowContext& ctx, const data::Dataset& dataset,
                 const flow::FlowConfig& cfg, Index mc_samples, std::uint64_t seed,
                 exec_mode mode) {
    cfg.validate();
    if (mc_samples < 1) throw invalid_input("make_batch: mc_samples must be >= 1");
    if (dataset.size() == 0) throw invalid_input("make_batch: empty dataset");
    Batch batch(static_cast<std::size_t>(mc_samples));
    parallel_for(mc_samples, mode, [&](std::ptrdiff_t i) {
        flow::McDraw d = flow::mc_draw(ctx, dataset, cfg, seed, i);
        batch[static_cast<std::size_t>(i)] =
            BatchItem{d.t, d.series->f_x, std::move(d.psi), std::move(d.target)};
    });
    return batch;
}

double batch_loss(const DitParams& params, const Batch& batch, exec_mode mode) {
    if (batch.empty()) throw invalid_input("batch_loss: empty batch");
    return ordered_mean(static_cast<std::ptrdiff_t>(batch.size()), mode, [&](std::ptrdiff_t i) {
        const BatchItem& it = batch[static_cast<std::size_t>(i)];
        return (dit_field(params, it.psi, it.f_x, it.t) - it.target).squaredNorm();
    });
}

double batch_loss_and_grad(const DitParams& params, const Batch& batch, DitParams& grads,
                           exec_mode mode) {
    if (batch.empty()) throw invalid_input("batch_loss_and_grad: empty batch");
    const std::size_t n = batch.size();
    const double inv = 1.0 / static_cast<double>(n);

    std::vector<DitParams> slot(n);
    std::vector<double> losses(n);
    parallel_for(static_cast<std::ptrdiff_t>(n), mode, [&](std::ptrdiff_t i) {
        const BatchItem& it = batch[static_cast<std::size_t>(i)];
        ForwardCache cache;
        const Vector F = forward_cached(params, it.psi, it.f_x, it.t, cache);
        const Vector r = F - it.target;
        losses[static_cast<std::size_t>(i)] = r.squaredNorm();
        slot[static_cast<std::size_t>(i)] = zeros_like(params);
        backward(params, cache, 2.0 * inv * r, slot[static_cast<std::size_t>(i)]);
    });

    grads = zeros_like(params);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        zip_tensors(grads, slot[i], [](auto& x, const auto& y) { x += y; });
        acc += losses[i];
    }
    return acc * inv;
}

TrainResult train_dit(const DitParams& params, const flow::FlowContext& ctx,
                      const data::Dataset& dataset, const flow::FlowConfig& cfg, int steps,
                      double lr, Index mc_batch, std::uint64_t seed, exec_mode mode) {
    params.validate();
    cfg.validate();
    if (steps < 0) throw invalid_input("train_dit: steps must be >= 0");
    if (lr < 0.0 || !std::isfinite(lr)) throw invalid_input("train_dit: lr must be >= 0");
    if (ctx.G.rows() != params.N_y) throw invalid_input("train_dit: context/readout N_y mismatch");

    TrainResult res;
    res.params = params;

    const Batch eval_batch =
        make_batch(ctx, dataset, cfg, mc_batch, rng::derive(seed, rng::tag("eval")), mode);
    double eval_loss = batch_loss(res.params, eval_batch, mode);
    if (!std::isfinite(eval_loss)) throw divergence_error("train_dit: non-finite loss", 0);
    res.loss_history.push_back(eval_loss);

    if (steps == 0 || lr == 0.0) {
        // no update path at all: the returned params are bitwise the input
        for (int s = 1; s <= steps; ++s) res.loss_history.push_back(eval_loss);
        return res;
    }

    DitParams grads = zeros_like(params);
    for (int s = 1; s <= steps; ++s) {
        const Batch batch = make_batch(
            ctx, dataset, cfg, mc_batch,
            rng::derive(seed, rng::tag("step"), static_cast<std::uint64_t>(s)), mode);
        const double before = batch_loss_and_grad(res.params, batch, grads, mode);
        if (!std::isfinite(before)) throw divergence_error("train_dit: non-finite loss", s);

        // backtracking guard: shrink the step until the batch loss stops
        // increasing; give up (and keep the params) after 30 halvings
        double step_lr = lr;
        for (int tries = 0; tries < 30; ++tries, step_lr *= 0.5) {
            DitParams candidate = axpy(res.params, grads, -step_lr);
            const double after = batch_loss(candidate, batch, mode);
            if (std::isfinite(after) && after <= before) {
                res.params = std::move(candidate);
                break;
            }
        }

        eval_loss = batch_loss(res.params, eval_batch, mode);
        if (!std::isfinite(eval_loss)) throw divergence_error("train_dit: non-finite loss", s);
        res.loss_history.push_back(eval_loss);
    }
    return res;
}

std::string to_json(const DitParams& params) {
    json blocks = json::array();
    for (const auto& b : params.blocks) {
        json heads = json::array();
        for (const auto& h : b.heads)
            heads.push_back(json{{"W_Q", matrix_json(h.W_Q)},
                                 {"W_K", matrix_json(h.W_K)},
                                 {"W_V", matrix_json(h.W_V)},
                                 {"W_O", matrix_json(h.W_O)}});
        blocks.push_back(json{{"heads", std::move(heads)},
                              {"W1", matrix_json(b.W1)},
                              {"W2", matrix_json(b.W2)},
                              {"b1", vector_json(b.b1)},
                              {"b2", vector_json(b.b2)}});
    }
    const json root{{"L", params.L},         {"d", params.d},
                    {"N_y", params.N_y},     {"N_x", params.N_x},
                    {"E", matrix_json(params.E)}, {"blocks", std::move(blocks)}};
    return root.dump(2);
}

DitParams dit_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw invalid_input(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    DitParams p;
    try {
        p.L = root.at("L").get<Index>();
        p.d = root.at("d").get<Index>();
        p.N_y = root.at("N_y").get<Index>();
        p.N_x = root.at("N_x").get<Index>();
        p.E = matrix_from_json(root.at("E"), "E");
        for (const auto& jb : root.at("blocks")) {
            DitBlock b;
            for (const auto& jh : jb.at("heads")) {
                AttnHead h;
                h.W_Q = matrix_from_json(jh.at("W_Q"), "W_Q");
                h.W_K = matrix_from_json(jh.at("W_K"), "W_K");
                h.W_V = matrix_from_json(jh.at("W_V"), "W_V");
                h.W_O = matrix_from_json(jh.at("W_O"), "W_O");
                b.heads.push_back(std::move(h));
            }
            b.W1 = matrix_from_json(jb.at("W1"), "W1");
            b.W2 = matrix_from_json(jb.at("W2"), "W2");
            b.b1 = vector_from_json(jb.at("b1"), "b1");
            b.b2 = vector_from_json(jb.at("b2"), "b2");
            p.blocks.push_back(std::move(b));
        }
    } catch (const json::exception& e) {
        throw invalid_input(std::string("checkpoint: missing or mistyped field: ") + e.what());
    }
    p.validate();
    return p;
}

std::string loss_csv(const std::vector<double>& history) {
    std::string out = "step,loss\n";
    for (std::size_t s = 0; s < history.size(); ++s)
        out += std::to_string(s) + "," + fmt_double(history[s]) + "\n";
    return out;
}

}  // namespace tsflow::dit
