#pragma once

// Analytic cost accounting: exact parameter counts, MAC totals as a
// function of channel count C and patch count P (matmul MACs plus FFT
// butterflies; elementwise work not counted), theoretical packed storage
// under quantization, and the streaming latency / battery arithmetic.

#include <cmath>
#include <map>
#include <string>

#include <json.hpp>

#include "unisig/model.hpp"

namespace unisig {

struct CostReport {
    int64_t params = 0;
    int64_t macs = 0;
    int64_t packed_bytes = 0;
    double streaming_latency_ms = 0.0;
    double battery_days = 0.0;

    nlohmann::ordered_json to_json() const {
        return {{"params", params},
                {"macs", macs},
                {"packed_bytes", packed_bytes},
                {"streaming_latency_ms", streaming_latency_ms},
                {"battery_days", battery_days}};
    }
};

template <typename S>
int64_t count_params(const Model<S>& model) {
    return model.count_params();
}

template <typename S>
std::map<std::string, int64_t> count_params_by_group(const Model<S>& model) {
    std::map<std::string, int64_t> groups;
    for (const auto& p : model.params()) {
        auto dot = p.name.find('.');
        groups[dot == std::string::npos ? p.name : p.name.substr(0, dot)] += p.tensor.numel();
    }
    return groups;
}

// MACs of one classification forward at channel count C and patch count P.
// Mirrors the forward pass structure exactly; affine in C, quadratic in P
// (temporal self-attention).
inline int64_t count_macs(const EncoderConfig& cfg, int64_t channels, int64_t patches) {
    const int64_t c = channels, p = patches, d = cfg.d_model, q = cfg.queries;
    const int64_t f = cfg.ffn_hidden();
    const int64_t n = c * p;  // patch cells
    int64_t macs = 0;

    // patch embedding
    const int64_t conv1_out = PatchEmbed<float>::kConv1Out;
    const int64_t conv2_out = PatchEmbed<float>::kConv2Out;
    macs += n * conv1_out * cfg.conv_ch1 * 7;
    macs += n * conv2_out * cfg.conv_ch2 * (cfg.conv_ch1 * 5);
    macs += n * 2 * kPatchLen * 5;  // radix-2 FFT butterflies, N/2 log2 N complex MACs
    macs += n * (conv2_out * cfg.conv_ch2 + PatchEmbed<float>::kFftBins) * d;

    // unifier blocks
    for (int b = 0; b < cfg.unifier_depth; ++b) {
        macs += p * q * d * d;      // query projection
        macs += 2 * p * c * d * d;  // key/value projections
        macs += 2 * p * q * c * d;  // scores + weighted values
        macs += p * q * d * d;      // output projection
        macs += 4 * p * q * d * d;  // self-attention q,k,v,o
        macs += 2 * p * q * q * d;  // self-attention scores + values
        macs += 2 * p * q * d * f;  // feed-forward
    }

    // temporal layers over the flattened sequence
    const int64_t s = p * q;
    for (int l = 0; l < cfg.temporal_layers; ++l) {
        macs += 4 * s * d * d;  // q,k,v,o projections
        macs += s * d;          // rotary rotations
        macs += 2 * s * s * d;  // scores + weighted values
        macs += 2 * s * d * f;  // feed-forward
    }

    // aggregation head
    macs += 2 * s * d * d;  // key/value projections
    macs += 2 * s * d;      // scores + pooling
    macs += d * cfg.num_classes;
    return macs;
}

// Theoretical packed storage under `spec`: eligible matrix weights carry
// bits*count packed payload plus one FP32 scale per output channel;
// everything else stays FP32.
template <typename S>
PackedSize packed_size(const Model<S>& model, const QuantSpec& spec) {
    spec.validate();
    PackedSize out;
    for (const auto& p : model.params()) {
        int64_t n = p.tensor.numel();
        if (p.quant_eligible) {
            out.payload_bytes += packed_payload_bytes(n, spec.weight_bits);
            out.overhead_bytes += 4 * p.tensor.shape().back();  // per-output-channel scales
            out.fp32_eligible_bytes += 4 * n;
        } else {
            out.fp32_passthrough += 4 * n;
        }
    }
    return out;
}

template <typename S>
int64_t packed_size_bytes(const Model<S>& model, const QuantSpec& spec) {
    return packed_size(model, spec).total();
}

// One patch of acquisition plus one inference pass.
inline double streaming_latency_ms(double compute_ms, double patch_ms = 125.0) {
    if (compute_ms < 0 || patch_ms < 0)
        throw ConfigError("streaming_latency_ms: negative duration");
    return patch_ms + compute_ms;
}

// Continuous-inference lifetime on a battery_J joule budget when each
// window_s-second window costs energy_mJ.
inline double battery_days(double energy_mJ_per_window, double window_s,
                           double battery_J = 4000.0) {
    if (energy_mJ_per_window <= 0 || window_s <= 0 || battery_J <= 0)
        throw ConfigError("battery_days: inputs must be positive");
    double windows = battery_J * 1000.0 / energy_mJ_per_window;
    return windows * window_s / 86400.0;
}

}  // namespace unisig
