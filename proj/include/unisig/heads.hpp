#pragma once

// Task heads: masked-patch reconstruction decoder for pretraining and the
// aggregation-query classifier for fine-tuning, plus the masking plan.

#include <vector>

#include "unisig/layers.hpp"
#include "unisig/sigproc.hpp"
#include "unisig/unifier.hpp"

namespace unisig {

// ----------------------------- masking -----------------------------

struct MaskPlan {
    int64_t channels = 0, patches = 0;
    double ratio = 0.0;
    uint64_t seed = 0;
    std::vector<uint8_t> mask;  // [C * P], 1 = masked

    bool masked(int64_t c, int64_t p) const { return mask[c * patches + p] != 0; }
    int64_t count() const {
        int64_t n = 0;
        for (uint8_t m : mask) n += m;
        return n;
    }
    double density() const {
        return static_cast<double>(count()) / static_cast<double>(mask.size());
    }
};

// Uniform random mask over (channel, patch) cells with an exact masked-cell
// count of round(ratio * C * P); deterministic per seed.
inline MaskPlan make_mask(int64_t channels, int64_t patches, double ratio, uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("make_mask: ratio must lie in (0, 1)");
    if (channels <= 0 || patches <= 0) throw ConfigError("make_mask: empty grid");
    MaskPlan plan;
    plan.channels = channels;
    plan.patches = patches;
    plan.ratio = ratio;
    plan.seed = seed;
    int64_t cells = channels * patches;
    int64_t n_masked = std::llround(ratio * static_cast<double>(cells));
    std::vector<int64_t> order(static_cast<size_t>(cells));
    for (int64_t i = 0; i < cells; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    plan.mask.assign(static_cast<size_t>(cells), 0);
    for (int64_t i = 0; i < n_masked; ++i) plan.mask[order[i]] = 1;
    return plan;
}

// Mean squared error over masked cells only.
template <typename S>
Tensor<S> masked_mse(const Tensor<S>& pred, const Tensor<S>& target, const MaskPlan& plan) {
    detail::check_same_shape(pred, target, "masked_mse");
    if (pred.rank() != 3) throw ShapeError("masked_mse: expected [C, P, L]");
    int64_t c = pred.dim(0), p = pred.dim(1), l = pred.dim(2);
    if (c != plan.channels || p != plan.patches)
        throw ShapeError("masked_mse: plan does not match prediction grid");
    int64_t n_masked = plan.count();
    if (n_masked == 0) throw ValueError("masked_mse: empty mask leaves the loss undefined");
    auto gate = Tensor<S>::zeros({c, p, l});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t pi = 0; pi < p; ++pi)
            if (plan.masked(ci, pi))
                for (int64_t i = 0; i < l; ++i) gate.at({ci, pi, i}) = S(1);
    auto diff = sub(pred, target);
    auto gated = mul(mul(diff, diff), gate);
    return scale(sum_all(gated), 1.0 / static_cast<double>(n_masked * l));
}

// ----------------------------- reconstruction decoder -----------------------------

// Channel-specific decoder: per-channel queries built from positional +
// sensor-type codes cross-attend to the Q latents of the matching patch
// index; a linear head emits the 32 reconstructed samples.
template <typename S>
struct ReconstructionDecoder {
    LayerNormParams<S> ln_kv;
    MultiHeadAttention<S> att;
    Linear<S> out;  // D -> 32

    static ReconstructionDecoder make(int64_t d, int heads, Rng& rng, double eps) {
        ReconstructionDecoder dec;
        dec.ln_kv = LayerNormParams<S>::make("decoder.ln_kv", d, eps);
        dec.att = MultiHeadAttention<S>::make("decoder.att", d, heads, rng);
        dec.out = Linear<S>::make("decoder.out", d, kPatchLen, rng);
        return dec;
    }

    // state.values [P, Q, D], dec_queries [C, D] -> [C, P, 32]
    Tensor<S> reconstruct(const LatentState<S>& state, const Tensor<S>& dec_queries,
                          ForwardContext<S>& ctx) const {
        if (state.values.rank() != 3) throw ShapeError("reconstruct: bad latent state");
        if (dec_queries.rank() != 2 || dec_queries.dim(1) != state.values.dim(2))
            throw ShapeError("reconstruct: decoder queries must be [C, D]");
        int64_t p = state.values.dim(0);
        auto kv = ln_kv.apply(state.values);            // [P, Q, D]
        auto q3 = expand_lead(dec_queries, p);          // [P, C, D]
        auto attended = att.attend(q3, kv, ctx);        // [P, C, D]
        auto samples = out.apply(attended, ctx);        // [P, C, 32]
        return permute(samples, {1, 0, 2});             // [C, P, 32]
    }

    void collect(std::vector<NamedParam<S>>& out_params) const {
        ln_kv.collect(out_params);
        att.collect(out_params);
        out.collect(out_params);
    }
};

// ----------------------------- classification head -----------------------------

template <typename S>
struct ClassifierHead {
    Tensor<S> agg_query;  // [D]
    Linear<S> key_proj, value_proj;
    Linear<S> out;  // D -> num_classes

    static ClassifierHead make(int64_t d, int64_t num_classes, Rng& rng) {
        ClassifierHead h;
        h.agg_query = Tensor<S>::randn({d}, rng, 0.02);
        h.agg_query.set_requires_grad();
        h.key_proj = Linear<S>::make("head.key", d, d, rng);
        h.value_proj = Linear<S>::make("head.value", d, d, rng);
        h.out = Linear<S>::make("head.out", d, num_classes, rng);
        return h;
    }

    // Aggregation query attends over all P*Q latents; pooled vector -> logits.
    Tensor<S> classify(const LatentState<S>& state, ForwardContext<S>& ctx,
                       Tensor<S>* pool_weights = nullptr) const {
        int64_t p = state.values.dim(0), q = state.values.dim(1), d = state.values.dim(2);
        auto flat = reshape(state.values, {p * q, d});
        auto keys = key_proj.apply(flat, ctx);
        auto values = value_proj.apply(flat, ctx);
        auto qrow = reshape(agg_query, {1, d});
        auto scores = scale(matmul(qrow, permute(keys, {1, 0})), 1.0 / std::sqrt(double(d)));
        auto weights = softmax(scores, 1);  // [1, P*Q]
        if (pool_weights) *pool_weights = weights.detached();
        auto pooled = matmul(weights, values);  // [1, D]
        return reshape(out.apply(pooled, ctx), {out.d_out()});
    }

    void collect(std::vector<NamedParam<S>>& out_params) const {
        out_params.push_back({"head.agg_query", agg_query, false});
        key_proj.collect(out_params);
        value_proj.collect(out_params);
        out.collect(out_params);
    }
};

}  // namespace unisig
