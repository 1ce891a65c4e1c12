#pragma once

// The shared encoder: patch embedding + sensor/positional codes, channel-
// modality unification, temporal transformer, and the two task heads.
// One weight set serves any channel count and modality mix.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "unisig/heads.hpp"
#include "unisig/patch_embed.hpp"
#include "unisig/quant.hpp"
#include "unisig/sigproc.hpp"
#include "unisig/temporal.hpp"
#include "unisig/unifier.hpp"

namespace unisig {

struct EncoderConfig {
    int64_t d_model = 256;
    int heads = 4;
    int64_t queries = 4;
    int unifier_depth = 1;
    int temporal_layers = 5;
    int ffn_mult = 4;
    int64_t conv_ch1 = 16;
    int64_t conv_ch2 = 16;
    int64_t num_classes = 5;
    double rope_base = 10000.0;
    double ln_eps = 1e-5;
    double mask_ratio = 0.5;
    int lora_rank = 16;
    double lora_alpha = 16.0;
    bool lora_enabled = false;

    int64_t ffn_hidden() const { return ffn_mult * d_model; }

    void validate() const {
        if (d_model <= 0 || heads <= 0 || d_model % heads != 0)
            throw ConfigError("config: d_model must be a positive multiple of heads");
        if ((d_model / heads) % 2 != 0)
            throw ConfigError("config: head width must be even (rotary embeddings)");
        if (queries < 1) throw ConfigError("config: need at least one latent query");
        if (unifier_depth < 1) throw ConfigError("config: unifier_depth must be >= 1");
        if (temporal_layers < 0) throw ConfigError("config: temporal_layers must be >= 0");
        if (conv_ch1 < 1 || conv_ch2 < 1) throw ConfigError("config: conv widths must be >= 1");
        if (num_classes < 2) throw ConfigError("config: need at least two classes");
        if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
            throw ConfigError("config: mask_ratio must lie in (0, 1)");
        if (lora_rank < 1) throw ConfigError("config: lora_rank must be >= 1");
    }

    nlohmann::ordered_json to_json() const {
        return {{"d_model", d_model},
                {"heads", heads},
                {"queries", queries},
                {"unifier_depth", unifier_depth},
                {"temporal_layers", temporal_layers},
                {"ffn_mult", ffn_mult},
                {"conv_ch1", conv_ch1},
                {"conv_ch2", conv_ch2},
                {"num_classes", num_classes},
                {"rope_base", rope_base},
                {"ln_eps", ln_eps},
                {"mask_ratio", mask_ratio},
                {"lora_rank", lora_rank},
                {"lora_alpha", lora_alpha},
                {"lora_enabled", lora_enabled}};
    }

    static EncoderConfig from_json(const nlohmann::json& j) {
        EncoderConfig c;
        c.d_model = j.value("d_model", c.d_model);
        c.heads = j.value("heads", c.heads);
        c.queries = j.value("queries", c.queries);
        c.unifier_depth = j.value("unifier_depth", c.unifier_depth);
        c.temporal_layers = j.value("temporal_layers", c.temporal_layers);
        c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
        c.conv_ch1 = j.value("conv_ch1", c.conv_ch1);
        c.conv_ch2 = j.value("conv_ch2", c.conv_ch2);
        c.num_classes = j.value("num_classes", c.num_classes);
        c.rope_base = j.value("rope_base", c.rope_base);
        c.ln_eps = j.value("ln_eps", c.ln_eps);
        c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
        c.lora_rank = j.value("lora_rank", c.lora_rank);
        c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
        c.lora_enabled = j.value("lora_enabled", c.lora_enabled);
        c.validate();
        return c;
    }
};

enum class FinetuneMode { FF, FE, LoRA };

inline FinetuneMode finetune_mode_from_name(const std::string& s) {
    if (s == "ff" || s == "FF") return FinetuneMode::FF;
    if (s == "fe" || s == "FE") return FinetuneMode::FE;
    if (s == "lora" || s == "LoRA") return FinetuneMode::LoRA;
    throw ConfigError("unknown fine-tuning mode: " + s);
}

template <typename S = float>
class Model {
public:
    explicit Model(EncoderConfig cfg, uint64_t seed = 0) : cfg_(cfg) {
        cfg.validate();
        Rng r_embed(derive_seed(seed, "embed"));
        embed = PatchEmbed<S>::make(cfg.conv_ch1, cfg.conv_ch2, cfg.d_model, r_embed);
        Rng r_tables(derive_seed(seed, "tables"));
        sensor_table = Tensor<S>::randn({3, cfg.d_model}, r_tables, 0.02);
        sensor_table.set_requires_grad();
        mask_token = Tensor<S>::randn({cfg.d_model}, r_tables, 0.02);
        mask_token.set_requires_grad();
        Rng r_unify(derive_seed(seed, "unifier"));
        unifier = Unifier<S>::make(cfg.queries, cfg.d_model, cfg.heads, cfg.ffn_hidden(),
                                   cfg.unifier_depth, r_unify, cfg.ln_eps);
        TemporalConfig tc;
        tc.layers = cfg.temporal_layers;
        tc.heads = cfg.heads;
        tc.d_model = cfg.d_model;
        tc.ffn_hidden = cfg.ffn_hidden();
        tc.rope_base = cfg.rope_base;
        tc.ln_eps = cfg.ln_eps;
        Rng r_temp(derive_seed(seed, "temporal"));
        temporal = TemporalEncoder<S>::make(tc, r_temp);
        Rng r_dec(derive_seed(seed, "decoder"));
        decoder = ReconstructionDecoder<S>::make(cfg.d_model, cfg.heads, r_dec, cfg.ln_eps);
        Rng r_head(derive_seed(seed, "head"));
        head = ClassifierHead<S>::make(cfg.d_model, cfg.num_classes, r_head);
        if (cfg.lora_enabled) enable_lora();
    }

    const EncoderConfig& config() const { return cfg_; }

    // ---- forward paths ----

    ForwardContext<S> make_context(CalibStats* calib = nullptr, bool retain = false) const {
        ForwardContext<S> ctx;
        ctx.quant = quant_ ? &*quant_ : nullptr;
        ctx.calib = calib;
        ctx.retain_attn = retain && attn_retention;
        return ctx;
    }

    // Composed per-cell tokens [C, P, D]; masked cells have their patch
    // features replaced by the learned mask token (codes stay in place).
    Tensor<S> tokens_for(const PatchGrid<S>& grid, const MaskPlan* plan,
                         ForwardContext<S>& ctx) const {
        int64_t c = grid.channels(), p = grid.patches(), d = cfg_.d_model;
        auto patches = reshape(grid.values, {c * p, kPatchLen});
        auto feats = reshape(embed.encode(patches, ctx), {c, p, d});
        if (plan) {
            if (plan->channels != c || plan->patches != p)
                throw ShapeError("mask plan does not match grid");
            auto keep = Tensor<S>::zeros({c, p, d});
            auto drop = Tensor<S>::zeros({c, p, d});
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t pi = 0; pi < p; ++pi) {
                    S m = plan->masked(ci, pi) ? S(1) : S(0);
                    for (int64_t j = 0; j < d; ++j) {
                        keep.at({ci, pi, j}) = S(1) - m;
                        drop.at({ci, pi, j}) = m;
                    }
                }
            auto token3 = expand_lead(expand_lead(mask_token, p), c);  // [C, P, D]
            feats = add(mul(feats, keep), mul(token3, drop));
        }
        auto sensor3 = permute(expand_lead(sensor_rows(grid.meta), p), {1, 0, 2});
        auto with_sensor = add(feats, sensor3);
        return add(with_sensor, positional_tensor(grid.meta, p));
    }

    LatentState<S> encode(const PatchGrid<S>& grid, const MaskPlan* plan,
                          ForwardContext<S>& ctx) const {
        auto state = unifier.unify(tokens_for(grid, plan, ctx), ctx);
        state.values = temporal.forward(state.values, ctx);
        return state;
    }

    Tensor<S> forward_pretrain_loss(const PatchGrid<S>& grid, const MaskPlan& plan,
                                    ForwardContext<S>& ctx) const {
        auto state = encode(grid, &plan, ctx);
        auto recon = decoder.reconstruct(state, decoder_queries(grid.meta), ctx);
        return masked_mse(recon, grid.values.detached(), plan);
    }

    Tensor<S> forward_logits(const PatchGrid<S>& grid, ForwardContext<S>& ctx,
                             LatentState<S>* state_out = nullptr) const {
        auto state = encode(grid, nullptr, ctx);
        if (state_out) *state_out = state;
        return head.classify(state, ctx);
    }

    Tensor<S> reconstruct(const LatentState<S>& state, const std::vector<ChannelInfo>& meta,
                          ForwardContext<S>& ctx) const {
        return decoder.reconstruct(state, decoder_queries(meta), ctx);
    }

    // Queries for the channel-specific decoder: positional + sensor codes.
    Tensor<S> decoder_queries(const std::vector<ChannelInfo>& meta) const {
        auto pos = positional_matrix(meta);
        return add(pos, sensor_rows(meta));
    }

    // ---- parameter registry ----

    std::vector<NamedParam<S>> params() const {
        std::vector<NamedParam<S>> out;
        embed.collect(out);
        out.push_back({"sensor_table", sensor_table, false});
        out.push_back({"mask_token", mask_token, false});
        unifier.collect(out);
        temporal.collect(out);
        decoder.collect(out);
        head.collect(out);
        return out;
    }

    std::vector<NamedParam<S>> trainable(FinetuneMode mode) const {
        auto all = params();
        if (mode == FinetuneMode::FF) return all;
        std::vector<NamedParam<S>> out;
        for (auto& p : all) {
            bool is_head = p.name.rfind("head.", 0) == 0;
            bool is_lora = p.name.find(".lora_") != std::string::npos;
            if (is_head || (mode == FinetuneMode::LoRA && is_lora)) out.push_back(p);
        }
        return out;
    }

    int64_t count_params() const {
        int64_t n = 0;
        for (const auto& p : params()) n += p.tensor.numel();
        return n;
    }

    std::vector<std::string> site_names() const {
        std::vector<std::string> names;
        for (const auto& p : params()) {
            const std::string& n = p.name;
            if (n.size() > 2 && n.compare(n.size() - 2, 2, ".w") == 0)
                names.push_back(n.substr(0, n.size() - 2));
        }
        return names;
    }

    // Adapters on the query/value projections of unifier self-attention and
    // every temporal attention layer.
    void enable_lora() {
        if (lora_active_) return;
        Rng rng(derive_seed(lora_seed_, "lora"));
        auto attach = [&](Linear<S>& l) {
            l.lora = std::make_shared<LoraAdapter<S>>(LoraAdapter<S>::make(
                l.d_in(), l.d_out(), cfg_.lora_rank, cfg_.lora_alpha, rng));
        };
        for (auto& block : unifier.blocks) {
            attach(block.self_att.wq);
            attach(block.self_att.wv);
        }
        for (auto& layer : temporal.layers) {
            attach(layer.att.wq);
            attach(layer.att.wv);
        }
        lora_active_ = true;
        cfg_.lora_enabled = true;
    }

    bool lora_active() const { return lora_active_; }

    // ---- quantization ----

    void set_quant(QuantState qs) {
        qs.spec.validate();
        quant_ = std::move(qs);
    }
    void clear_quant() { quant_.reset(); }
    const std::optional<QuantState>& quant_state() const { return quant_; }

    bool attn_retention = true;

    PatchEmbed<S> embed;
    Tensor<S> sensor_table;  // [3, D]
    Tensor<S> mask_token;    // [D]
    Unifier<S> unifier;
    TemporalEncoder<S> temporal;
    ReconstructionDecoder<S> decoder;
    ClassifierHead<S> head;
    LeadAngleTable lead_table = LeadAngleTable::standard();

private:
    Tensor<S> sensor_rows(const std::vector<ChannelInfo>& meta) const {
        std::vector<Tensor<S>> rows;
        for (const auto& ch : meta)
            rows.push_back(select_row(sensor_table, static_cast<int64_t>(ch.modality)));
        return stack0(rows);  // [C, D]
    }

    Tensor<S> positional_matrix(const std::vector<ChannelInfo>& meta) const {
        int64_t c = static_cast<int64_t>(meta.size());
        auto pos = Tensor<S>::zeros({c, cfg_.d_model});
        for (int64_t ci = 0; ci < c; ++ci) {
            auto code = positional_encoding<S>(meta[ci].coords, cfg_.d_model);
            for (int64_t j = 0; j < cfg_.d_model; ++j) pos.at({ci, j}) = code[j];
        }
        return pos;
    }

    Tensor<S> positional_tensor(const std::vector<ChannelInfo>& meta, int64_t p) const {
        int64_t c = static_cast<int64_t>(meta.size());
        auto out = Tensor<S>::zeros({c, p, cfg_.d_model});
        for (int64_t ci = 0; ci < c; ++ci) {
            auto code = positional_encoding<S>(meta[ci].coords, cfg_.d_model);
            for (int64_t pi = 0; pi < p; ++pi)
                for (int64_t j = 0; j < cfg_.d_model; ++j) out.at({ci, pi, j}) = code[j];
        }
        return out;
    }

    EncoderConfig cfg_;
    std::optional<QuantState> quant_;
    bool lora_active_ = false;
    uint64_t lora_seed_ = 0x10ad;
};

// ----------------------------- PTQ entry points -----------------------------

// Runs the classification forward over the calibration grids, recording
// per-site activation statistics.
template <typename S>
CalibStats calibrate(const Model<S>& model, const std::vector<PatchGrid<S>>& batches) {
    if (batches.empty()) throw CalibrationError("calibrate: no calibration batches");
    CalibStats stats;
    for (const auto& grid : batches) {
        auto ctx = model.make_context(&stats);
        ctx.quant = nullptr;  // statistics are collected on the FP32 path
        model.forward_logits(grid, ctx);
    }
    return stats;
}

// Wraps all eligible weights in per-channel fake quantization and every
// activation site in its calibrated quantizer. Parameters are unchanged.
template <typename S>
void apply_ptq(Model<S>& model, const QuantSpec& spec, const CalibStats& stats) {
    spec.validate();
    QuantState qs;
    qs.spec = spec;
    for (const auto& name : model.site_names()) {
        auto it = stats.sites.find(name);
        if (it == stats.sites.end())
            throw CalibrationError("apply_ptq: no calibration statistics for site " + name);
        qs.sites[name] = resolve_act_params(it->second, spec.act_bits, stats.percentile);
    }
    model.set_quant(std::move(qs));
}

}  // namespace unisig
