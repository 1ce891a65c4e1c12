#pragma once

// Patch feature extraction: a two-stage strided conv branch and a real-FFT
// magnitude branch, concatenated and projected to d_model; plus the fixed
// sinusoidal positional code over 3-D channel coordinates, the learned
// sensor-type table, and ECG lead-angle geometry.

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "unisig/layers.hpp"
#include "unisig/sigproc.hpp"
#include "unisig/tensor.hpp"

namespace unisig {

// ----------------------------- ECG lead geometry -----------------------------

// Frontal hexaxial limb leads on the unit circle; precordial V1..V6 on a
// ring of smaller radius in the same plane so all 12 coordinates stay
// pairwise distinct. Angles are degrees in [-180, 180).
struct LeadAngleTable {
    struct Entry {
        double degrees = 0.0;
        double radius = 1.0;
    };
    std::map<std::string, Entry> leads;

    static LeadAngleTable standard() {
        LeadAngleTable t;
        t.leads = {
            {"I", {0.0, 1.0}},     {"II", {60.0, 1.0}},   {"III", {120.0, 1.0}},
            {"aVR", {-150.0, 1.0}}, {"aVL", {-30.0, 1.0}}, {"aVF", {90.0, 1.0}},
            {"V1", {-15.0, 0.5}},  {"V2", {0.0, 0.5}},    {"V3", {15.0, 0.5}},
            {"V4", {30.0, 0.5}},   {"V5", {45.0, 0.5}},   {"V6", {60.0, 0.5}},
        };
        return t;
    }

    // JSON object mapping lead -> degrees, or lead -> {"degrees":..,"radius":..}.
    static LeadAngleTable from_json(const nlohmann::json& j) {
        LeadAngleTable t = standard();
        for (auto it = j.begin(); it != j.end(); ++it) {
            Entry e;
            if (it.value().is_number()) {
                e.degrees = it.value().get<double>();
                auto prev = t.leads.find(it.key());
                e.radius = prev != t.leads.end() ? prev->second.radius : 1.0;
            } else {
                e.degrees = it.value().at("degrees").get<double>();
                e.radius = it.value().value("radius", 1.0);
            }
            if (e.degrees < -180.0 || e.degrees >= 180.0)
                throw ConfigError("lead table: angle out of [-180, 180) for " + it.key());
            t.leads[it.key()] = e;
        }
        return t;
    }

    std::array<double, 3> coords(const std::string& lead) const {
        auto it = leads.find(lead);
        if (it == leads.end()) throw ValueError("unknown ECG lead: " + lead);
        double rad = it->second.degrees * M_PI / 180.0;
        return {it->second.radius * std::cos(rad), it->second.radius * std::sin(rad), 0.0};
    }
};

inline std::array<double, 3> ecg_lead_coordinates(const std::string& lead,
                                                  const LeadAngleTable& table) {
    return table.coords(lead);
}

// ----------------------------- positional encoding -----------------------------

// D/6 sinusoidal frequency bands per axis, sin/cos interleaved; trailing
// slots (when 6 does not divide D) stay zero. Fixed, never learned.
template <typename S>
std::vector<S> positional_encoding(const std::array<double, 3>& coords, int64_t d) {
    int64_t bands = d / 6;
    std::vector<S> code(static_cast<size_t>(d), S(0));
    for (int axis = 0; axis < 3; ++axis)
        for (int64_t i = 0; i < bands; ++i) {
            double omega = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(bands));
            double angle = coords[axis] * omega;
            code[(axis * bands + i) * 2] = static_cast<S>(std::sin(angle));
            code[(axis * bands + i) * 2 + 1] = static_cast<S>(std::cos(angle));
        }
    return code;
}

// ----------------------------- patch encoder -----------------------------

template <typename S>
struct PatchEmbed {
    Linear<S> conv1;  // kernel 7, stride 2 over the raw patch
    Linear<S> conv2;  // kernel 5, stride 2 over conv1 features
    Linear<S> proj;   // (conv features ++ 17 FFT magnitudes) -> d_model
    int64_t c1 = 16, c2 = 16;

    static constexpr int64_t kConv1Out = (kPatchLen - 7) / 2 + 1;          // 13
    static constexpr int64_t kConv2Out = (kConv1Out - 5) / 2 + 1;          // 5
    static constexpr int64_t kFftBins = kPatchLen / 2 + 1;                 // 17

    static PatchEmbed make(int64_t c1, int64_t c2, int64_t d, Rng& rng) {
        PatchEmbed e;
        e.c1 = c1;
        e.c2 = c2;
        e.conv1 = Linear<S>::make("embed.conv1", 7, c1, rng);
        e.conv2 = Linear<S>::make("embed.conv2", c1 * 5, c2, rng);
        e.proj = Linear<S>::make("embed.proj", kConv2Out * c2 + kFftBins, d, rng);
        return e;
    }

    int64_t feature_width() const { return kConv2Out * c2 + kFftBins; }

    // patches [N, 32] -> [N, d_model]
    Tensor<S> encode(const Tensor<S>& patches, ForwardContext<S>& ctx) const {
        if (patches.rank() != 2 || patches.dim(1) != kPatchLen)
            throw ShapeError("encode_patch: expected [N, 32] patches");
        int64_t n = patches.dim(0);
        auto conv_feats = conv_branch(patches, ctx);
        auto fft_feats = rfft_mag(patches);  // [N, 17]
        auto feats = concat_last(conv_feats, fft_feats);
        return proj.apply(feats, ctx);
    }

    // conv branch alone, [N, 32] -> [N, 5*c2]; exposed so the FFT / conv
    // contributions can be inspected separately.
    Tensor<S> conv_branch(const Tensor<S>& patches, ForwardContext<S>& ctx) const {
        int64_t n = patches.dim(0);
        auto x = reshape(patches, {n, 1, kPatchLen});
        auto cols1 = im2col1d(x, 7, 2);                       // [N, 13, 7]
        auto h1 = gelu(conv1.apply(cols1, ctx));              // [N, 13, c1]
        auto chan = permute(h1, {0, 2, 1});                   // [N, c1, 13]
        auto cols2 = im2col1d(chan, 5, 2);                    // [N, 5, c1*5]
        auto h2 = gelu(conv2.apply(cols2, ctx));              // [N, 5, c2]
        return reshape(h2, {n, kConv2Out * c2});
    }

    void collect(std::vector<NamedParam<S>>& out) const {
        conv1.collect(out);
        conv2.collect(out);
        proj.collect(out);
    }
};

// ----------------------------- composition -----------------------------

template <typename S>
struct PatchToken {
    Tensor<S> vector;  // [D]
    int64_t channel_index = 0;
    int64_t patch_index = 0;
    Modality modality = Modality::EEG;
};

// token = patch features + positional code + sensor-type row.
template <typename S>
PatchToken<S> compose_token(const Tensor<S>& patch, const std::array<double, 3>& coords,
                            Modality modality, const PatchEmbed<S>& embed,
                            const Tensor<S>& sensor_table, ForwardContext<S>& ctx) {
    int64_t d = sensor_table.dim(1);
    auto feat = reshape(embed.encode(reshape(patch, {1, kPatchLen}), ctx), {d});
    auto pos = Tensor<S>::from_data({d}, positional_encoding<S>(coords, d));
    auto sensor = select_row(sensor_table, static_cast<int64_t>(modality));
    PatchToken<S> tok;
    tok.vector = add(add(feat, pos), sensor);
    tok.modality = modality;
    return tok;
}

}  // namespace unisig
