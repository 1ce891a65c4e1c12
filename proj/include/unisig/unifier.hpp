#pragma once

// Channel-Modality Unification: per patch index, Q learned queries
// cross-attend over the channel tokens (any count, any modality mix), then
// self-attend. Output shape [P, Q, D] is independent of the channel count.

#include <vector>

#include "unisig/layers.hpp"
#include "unisig/tensor.hpp"

namespace unisig {

template <typename S>
struct LatentState {
    Tensor<S> values;  // [P, Q, D]
    Tensor<S> attn;    // [P, Q, C] head-averaged channel scores, detached; empty if not retained
};

template <typename S>
struct UnifierBlock {
    LayerNormParams<S> ln_q, ln_kv, ln_self, ln_ffn;
    MultiHeadAttention<S> cross, self_att;
    FeedForward<S> ffn;

    static UnifierBlock make(const std::string& name, int64_t d, int heads, int64_t ffn_hidden,
                             Rng& rng, double eps) {
        UnifierBlock b;
        b.ln_q = LayerNormParams<S>::make(name + ".ln_q", d, eps);
        b.ln_kv = LayerNormParams<S>::make(name + ".ln_kv", d, eps);
        b.ln_self = LayerNormParams<S>::make(name + ".ln_self", d, eps);
        b.ln_ffn = LayerNormParams<S>::make(name + ".ln_ffn", d, eps);
        b.cross = MultiHeadAttention<S>::make(name + ".cross", d, heads, rng);
        b.self_att = MultiHeadAttention<S>::make(name + ".self", d, heads, rng);
        b.ffn = FeedForward<S>::make(name, d, ffn_hidden, rng);
        return b;
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        ln_q.collect(out);
        ln_kv.collect(out);
        ln_self.collect(out);
        ln_ffn.collect(out);
        cross.collect(out);
        self_att.collect(out);
        ffn.collect(out);
    }
};

template <typename S>
struct Unifier {
    Tensor<S> queries;  // [Q, D] learned
    std::vector<UnifierBlock<S>> blocks;

    static Unifier make(int64_t q, int64_t d, int heads, int64_t ffn_hidden, int depth, Rng& rng,
                        double eps) {
        Unifier u;
        u.queries = Tensor<S>::randn({q, d}, rng, 0.02);
        u.queries.set_requires_grad();
        for (int i = 0; i < depth; ++i)
            u.blocks.push_back(UnifierBlock<S>::make("unifier." + std::to_string(i), d, heads,
                                                     ffn_hidden, rng, eps));
        return u;
    }

    // tokens [C, P, D] -> LatentState with values [P, Q, D].
    // The channel softmax uses the canonical-order partition sum, so the
    // retained attention weights reproduce bit-exactly under any channel
    // permutation of the input.
    LatentState<S> unify(const Tensor<S>& tokens, ForwardContext<S>& ctx) const {
        if (tokens.rank() != 3) throw ShapeError("unify: expected [C, P, D] tokens");
        int64_t c = tokens.dim(0), p = tokens.dim(1);
        if (c == 0) throw ValueError("unify: empty channel set");
        auto kv = permute(tokens, {1, 0, 2});          // [P, C, D]
        auto state = expand_lead(queries, p);          // [P, Q, D]
        LatentState<S> out;
        for (const auto& block : blocks) {
            state = cross_step(block, state, kv, ctx, &out.attn);
            state = refine_step(block, state, ctx);
        }
        out.values = state;
        return out;
    }

    // Cross-attention stage alone (queries gather channel information).
    LatentState<S> cross_attend(const Tensor<S>& tokens, ForwardContext<S>& ctx) const {
        if (tokens.rank() != 3) throw ShapeError("cross_attend: expected [C, P, D] tokens");
        if (tokens.dim(0) == 0) throw ValueError("cross_attend: empty channel set");
        auto kv = permute(tokens, {1, 0, 2});
        auto state = expand_lead(queries, tokens.dim(1));
        LatentState<S> out;
        out.values = cross_step(blocks.front(), state, kv, ctx, &out.attn);
        return out;
    }

    // Self-attention + feed-forward refinement stage alone.
    LatentState<S> refine(const LatentState<S>& state, ForwardContext<S>& ctx) const {
        LatentState<S> out;
        out.values = refine_step(blocks.front(), state.values, ctx);
        out.attn = state.attn;
        return out;
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        out.push_back({"unifier.queries", queries, false});
        for (const auto& b : blocks) b.collect(out);
    }

private:
    Tensor<S> cross_step(const UnifierBlock<S>& block, const Tensor<S>& state, const Tensor<S>& kv,
                         ForwardContext<S>& ctx, Tensor<S>* attn_out) const {
        AttentionOptions opt;
        opt.sorted_softmax = true;
        Tensor<S> attn_mean;
        auto att = block.cross.attend(block.ln_q.apply(state), block.ln_kv.apply(kv), ctx, opt,
                                      ctx.retain_attn ? &attn_mean : nullptr);
        if (ctx.retain_attn && attn_out) *attn_out = attn_mean;
        return add(state, att);
    }

    Tensor<S> refine_step(const UnifierBlock<S>& block, const Tensor<S>& state,
                          ForwardContext<S>& ctx) const {
        auto sn = block.ln_self.apply(state);
        auto refined = add(state, block.self_att.attend(sn, sn, ctx));
        return add(refined, block.ffn.apply(block.ln_ffn.apply(refined), ctx));
    }
};

}  // namespace unisig
