#pragma once

// Shared building blocks: linear projections (with optional LoRA adapters
// and fake-quant hooks), pre-norm multi-head attention, feed-forward blocks.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unisig/quant.hpp"
#include "unisig/tensor.hpp"

namespace unisig {

template <typename S>
struct NamedParam {
    std::string name;
    Tensor<S> tensor;
    bool quant_eligible = false;  // true only for matrix weights
};

template <typename S>
struct ForwardContext {
    const QuantState* quant = nullptr;  // active fake quantization
    CalibStats* calib = nullptr;        // collecting activation statistics
    bool retain_attn = false;
};

// Rank-16 low-rank adapter: y += (alpha/r) * (x A) B with B zero-initialized.
template <typename S>
struct LoraAdapter {
    Tensor<S> a;  // [d_in, r]
    Tensor<S> b;  // [r, d_out]
    int rank = 16;
    double alpha = 16.0;

    static LoraAdapter make(int64_t d_in, int64_t d_out, int rank, double alpha, Rng& rng) {
        LoraAdapter ad;
        ad.rank = rank;
        ad.alpha = alpha;
        ad.a = Tensor<S>::randn({d_in, rank}, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
        ad.b = Tensor<S>::zeros({rank, d_out});
        ad.a.set_requires_grad();
        ad.b.set_requires_grad();
        return ad;
    }
};

// y = x W (+ b) with x of any rank >= 1 over the trailing d_in axis.
// Under an active QuantState the weight passes through per-channel fake
// quantization and the output through the site's calibrated quantizer.
template <typename S>
struct Linear {
    std::string name;
    Tensor<S> w;  // [d_in, d_out]
    Tensor<S> b;  // [d_out], unused when has_bias == false
    bool has_bias = true;
    bool quant_eligible = true;
    std::shared_ptr<LoraAdapter<S>> lora;

    static Linear make(const std::string& name, int64_t d_in, int64_t d_out, Rng& rng,
                       bool bias = true) {
        Linear l;
        l.name = name;
        l.w = Tensor<S>::randn({d_in, d_out}, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
        l.w.set_requires_grad();
        if (bias) {
            l.b = Tensor<S>::zeros({d_out});
            l.b.set_requires_grad();
        }
        l.has_bias = bias;
        return l;
    }

    int64_t d_in() const { return w.dim(0); }
    int64_t d_out() const { return w.dim(1); }

    Tensor<S> apply(const Tensor<S>& x, ForwardContext<S>& ctx) const {
        if (x.shape().back() != d_in())
            throw ShapeError("linear " + name + ": input width " +
                             std::to_string(x.shape().back()) + " != " + std::to_string(d_in()));
        Shape out_shape = x.shape();
        out_shape.back() = d_out();
        auto x2 = reshape(x, {x.numel() / d_in(), d_in()});
        Tensor<S> weight = w;
        if (ctx.quant && quant_eligible)
            weight = qdq_weight_per_channel(w, ctx.quant->spec.weight_bits);
        auto y = matmul(x2, weight);
        if (has_bias) y = add_bias(y, b);
        if (lora) {
            auto delta = matmul(matmul(x2, lora->a), lora->b);
            y = add(y, scale(delta, lora->alpha / static_cast<double>(lora->rank)));
        }
        if (ctx.calib) ctx.calib->record(name, y.data());
        if (ctx.quant) {
            auto it = ctx.quant->sites.find(name);
            if (it != ctx.quant->sites.end())
                y = qdq(y, ctx.quant->spec.act_bits, it->second.scale, it->second.zero_point,
                        /*symmetric=*/false);
        }
        return reshape(y, out_shape);
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        out.push_back({name + ".w", w, quant_eligible});
        if (has_bias) out.push_back({name + ".b", b, false});
        if (lora) {
            out.push_back({name + ".lora_a", lora->a, false});
            out.push_back({name + ".lora_b", lora->b, false});
        }
    }
};

template <typename S>
struct LayerNormParams {
    std::string name;
    Tensor<S> gamma, beta;
    double eps = 1e-5;

    static LayerNormParams make(const std::string& name, int64_t d, double eps) {
        LayerNormParams p;
        p.name = name;
        p.gamma = Tensor<S>::full({d}, S(1));
        p.beta = Tensor<S>::zeros({d});
        p.gamma.set_requires_grad();
        p.beta.set_requires_grad();
        p.eps = eps;
        return p;
    }

    Tensor<S> apply(const Tensor<S>& x) const { return layer_norm(x, gamma, beta, eps); }

    void collect(std::vector<NamedParam<S>>& out) const {
        out.push_back({name + ".gamma", gamma, false});
        out.push_back({name + ".beta", beta, false});
    }
};

struct AttentionOptions {
    const std::vector<int64_t>* rope_positions = nullptr;  // per query/key index
    const RopeParams* rope = nullptr;
    bool sorted_softmax = false;  // canonical-order partition sum over keys
};

// Multi-head scaled dot-product attention over batched sequences:
// q_in [B, Nq, D], kv [B, Nk, D] -> [B, Nq, D].
template <typename S>
struct MultiHeadAttention {
    int heads = 4;
    Linear<S> wq, wk, wv, wo;

    static MultiHeadAttention make(const std::string& name, int64_t d, int heads, Rng& rng) {
        MultiHeadAttention a;
        a.heads = heads;
        a.wq = Linear<S>::make(name + ".q", d, d, rng);
        a.wk = Linear<S>::make(name + ".k", d, d, rng);
        a.wv = Linear<S>::make(name + ".v", d, d, rng);
        a.wo = Linear<S>::make(name + ".o", d, d, rng);
        return a;
    }

    // attn_mean, when given, receives the head-averaged attention weights
    // [B, Nq, Nk] as detached data.
    Tensor<S> attend(const Tensor<S>& q_in, const Tensor<S>& kv, ForwardContext<S>& ctx,
                     const AttentionOptions& opt = {}, Tensor<S>* attn_mean = nullptr) const {
        int64_t b = q_in.dim(0), nq = q_in.dim(1), nk = kv.dim(1);
        int64_t d = wq.d_in();
        int64_t dh = d / heads;
        auto split = [&](const Tensor<S>& t, int64_t n) {
            return permute(reshape(t, {b, n, heads, dh}), {0, 2, 1, 3});  // [B,H,N,dh]
        };
        auto q = split(wq.apply(q_in, ctx), nq);
        auto k = split(wk.apply(kv, ctx), nk);
        auto v = split(wv.apply(kv, ctx), nk);
        if (opt.rope) {
            q = rope_apply(q, *opt.rope_positions, *opt.rope);
            k = rope_apply(k, *opt.rope_positions, *opt.rope);
        }
        auto scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(double(dh)));
        auto weights = softmax(scores, 3, opt.sorted_softmax);
        if (attn_mean) {
            *attn_mean = Tensor<S>::zeros({b, nq, nk});
            const auto& wd = weights.data();
            for (int64_t i = 0; i < b; ++i)
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t r = 0; r < nq; ++r)
                        for (int64_t c = 0; c < nk; ++c)
                            attn_mean->at({i, r, c}) +=
                                wd[((i * heads + h) * nq + r) * nk + c] / static_cast<S>(heads);
        }
        auto out = matmul(weights, v);                            // [B,H,Nq,dh]
        auto merged = reshape(permute(out, {0, 2, 1, 3}), {b, nq, d});
        return wo.apply(merged, ctx);
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

template <typename S>
struct FeedForward {
    Linear<S> w1, w2;

    static FeedForward make(const std::string& name, int64_t d, int64_t hidden, Rng& rng) {
        FeedForward f;
        f.w1 = Linear<S>::make(name + ".ffn1", d, hidden, rng);
        f.w2 = Linear<S>::make(name + ".ffn2", hidden, d, rng);
        return f;
    }

    Tensor<S> apply(const Tensor<S>& x, ForwardContext<S>& ctx) const {
        return w2.apply(gelu(w1.apply(x, ctx)), ctx);
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        w1.collect(out);
        w2.collect(out);
    }
};

// Spec-level LoRA application to a single input vector: W x + (alpha/r) B (A x).
template <typename S>
Tensor<S> lora_apply(const Tensor<S>& w, const LoraAdapter<S>& adapter, const Tensor<S>& x) {
    if (x.rank() != 1 || x.dim(0) != w.dim(0))
        throw ShapeError("lora_apply: x must be a [d_in] vector");
    if (adapter.a.dim(0) != w.dim(0) || adapter.b.dim(1) != w.dim(1) ||
        adapter.a.dim(1) != adapter.rank || adapter.b.dim(0) != adapter.rank)
        throw ConfigError("lora_apply: adapter rank/shape mismatch");
    auto x2 = reshape(x, {1, x.dim(0)});
    auto base = matmul(x2, w);
    auto delta = scale(matmul(matmul(x2, adapter.a), adapter.b),
                       adapter.alpha / static_cast<double>(adapter.rank));
    return reshape(add(base, delta), {w.dim(1)});
}

}  // namespace unisig
