#pragma once

// Patch-wise temporal Transformer over the unified latent sequence. Queries
// are flattened patch-major (p0q0, p0q1, ...) and rotary embeddings use the
// patch index as position, so queries within a patch share a position and
// only relative patch offsets enter attention.

#include <vector>

#include "unisig/layers.hpp"
#include "unisig/unifier.hpp"

namespace unisig {

struct TemporalConfig {
    int layers = 5;
    int heads = 4;
    int64_t d_model = 256;
    int64_t ffn_hidden = 1024;
    double rope_base = 10000.0;
    double ln_eps = 1e-5;
};

template <typename S>
struct TemporalLayer {
    LayerNormParams<S> ln_att, ln_ffn;
    MultiHeadAttention<S> att;
    FeedForward<S> ffn;

    static TemporalLayer make(const std::string& name, const TemporalConfig& cfg, Rng& rng) {
        TemporalLayer l;
        l.ln_att = LayerNormParams<S>::make(name + ".ln_att", cfg.d_model, cfg.ln_eps);
        l.ln_ffn = LayerNormParams<S>::make(name + ".ln_ffn", cfg.d_model, cfg.ln_eps);
        l.att = MultiHeadAttention<S>::make(name + ".att", cfg.d_model, cfg.heads, rng);
        l.ffn = FeedForward<S>::make(name, cfg.d_model, cfg.ffn_hidden, rng);
        return l;
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        ln_att.collect(out);
        ln_ffn.collect(out);
        att.collect(out);
        ffn.collect(out);
    }
};

template <typename S>
struct TemporalEncoder {
    TemporalConfig cfg;
    RopeParams rope;
    std::vector<TemporalLayer<S>> layers;

    static TemporalEncoder make(const TemporalConfig& cfg, Rng& rng) {
        if (cfg.d_model % cfg.heads != 0)
            throw ConfigError("temporal: d_model must be divisible by heads");
        if ((cfg.d_model / cfg.heads) % 2 != 0)
            throw ConfigError("temporal: head width must be even for rotary embeddings");
        TemporalEncoder t;
        t.cfg = cfg;
        t.rope = RopeParams{cfg.rope_base, static_cast<int>(cfg.d_model / cfg.heads)};
        for (int i = 0; i < cfg.layers; ++i)
            t.layers.push_back(
                TemporalLayer<S>::make("temporal." + std::to_string(i), cfg, rng));
        return t;
    }

    // [P, Q, D] -> [P, Q, D]; bidirectional attention, L == 0 is the identity.
    Tensor<S> forward(const Tensor<S>& values, ForwardContext<S>& ctx,
                      int64_t position_offset = 0) const {
        if (values.rank() != 3) throw ShapeError("temporal_forward: expected [P, Q, D]");
        int64_t p = values.dim(0), q = values.dim(1), d = values.dim(2);
        if (layers.empty()) return values;
        auto x = reshape(values, {1, p * q, d});
        std::vector<int64_t> positions(static_cast<size_t>(p * q));
        for (int64_t s = 0; s < p * q; ++s) positions[s] = s / q + position_offset;
        AttentionOptions opt;
        opt.rope = &rope;
        opt.rope_positions = &positions;
        for (const auto& layer : layers) {
            auto xn = layer.ln_att.apply(x);
            x = add(x, layer.att.attend(xn, xn, ctx, opt));
            x = add(x, layer.ffn.apply(layer.ln_ffn.apply(x), ctx));
        }
        return reshape(x, {p, q, d});
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        for (const auto& l : layers) l.collect(out);
    }
};

}  // namespace unisig
