#pragma once

// On-disk formats, all little-endian:
//   .bsr        raw float32 samples, channel-major, with a JSON sidecar
//   .ckpt/.blob checkpoint manifest (JSON) + concatenated tensor payload
//   attention CSV (patch,query,modality,score)
// Writes go through a temp-file-then-rename step so readers never observe
// partial files.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "unisig/cost.hpp"
#include "unisig/model.hpp"
#include "unisig/sigproc.hpp"
#include "unisig/unifier.hpp"

namespace unisig {

namespace io_detail {

inline void atomic_write(const std::string& path, const std::string& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void append_f32(std::string& out, float v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

inline float read_f32(const std::string& bytes, size_t offset) {
    float v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return v;
}

}  // namespace io_detail

// ----------------------------- BSR -----------------------------

inline void write_bsr(const std::string& path, const MultimodalRecord& rec) {
    rec.validate();
    std::string payload;
    payload.reserve(static_cast<size_t>(rec.num_channels() * rec.num_samples() * 4));
    for (const auto& ch : rec.samples)
        for (double v : ch) io_detail::append_f32(payload, static_cast<float>(v));

    nlohmann::ordered_json sidecar;
    sidecar["fs"] = rec.sample_rate_hz;
    sidecar["n_samples"] = rec.num_samples();
    sidecar["duration_s"] = static_cast<double>(rec.num_samples()) / rec.sample_rate_hz;
    auto& chans = sidecar["channels"] = nlohmann::ordered_json::array();
    for (const auto& ch : rec.channels) {
        chans.push_back({{"label", ch.label},
                         {"modality", modality_name(ch.modality)},
                         {"coords", {ch.coords[0], ch.coords[1], ch.coords[2]}}});
    }
    io_detail::atomic_write(path, payload);
    io_detail::atomic_write(path + ".json", sidecar.dump(2) + "\n");
}

inline MultimodalRecord read_bsr(const std::string& path) {
    auto payload = io_detail::read_file(path);
    auto sidecar = nlohmann::json::parse(io_detail::read_file(path + ".json"));
    MultimodalRecord rec;
    rec.sample_rate_hz = sidecar.at("fs").get<double>();
    int64_t n = sidecar.at("n_samples").get<int64_t>();
    int64_t c = static_cast<int64_t>(sidecar.at("channels").size());
    if (static_cast<int64_t>(payload.size()) != n * c * 4)
        throw IoError(path + ": payload is " + std::to_string(payload.size()) +
                      " bytes, sidecar expects " + std::to_string(n * c * 4));
    for (int64_t ci = 0; ci < c; ++ci) {
        const auto& j = sidecar.at("channels")[ci];
        ChannelInfo info;
        info.label = j.at("label").get<std::string>();
        info.modality = modality_from_name(j.at("modality").get<std::string>());
        for (int k = 0; k < 3; ++k) info.coords[k] = j.at("coords")[k].get<double>();
        rec.channels.push_back(info);
        std::vector<double> samples(n);
        for (int64_t i = 0; i < n; ++i)
            samples[i] = io_detail::read_f32(payload, static_cast<size_t>((ci * n + i) * 4));
        rec.samples.push_back(std::move(samples));
    }
    return rec;
}

// ----------------------------- checkpoints -----------------------------

inline std::string checkpoint_base(const std::string& path) {
    const std::string suffix = ".ckpt";
    if (path.size() > suffix.size() &&
        path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return path.substr(0, path.size() - suffix.size());
    return path;
}

inline nlohmann::ordered_json quant_to_json(const QuantState& qs) {
    nlohmann::ordered_json j;
    j["spec"] = {{"weight_bits", qs.spec.weight_bits},
                 {"act_bits", qs.spec.act_bits},
                 {"mode", qs.spec.mode == QuantMode::PTQ ? "ptq" : "qat"}};
    auto& sites = j["sites"] = nlohmann::ordered_json::object();
    for (const auto& [name, p] : qs.sites)
        sites[name] = {{"scale", p.scale}, {"zero_point", p.zero_point}};
    return j;
}

inline QuantState quant_from_json(const nlohmann::json& j) {
    QuantState qs;
    qs.spec.weight_bits = j.at("spec").at("weight_bits").get<int>();
    qs.spec.act_bits = j.at("spec").at("act_bits").get<int>();
    qs.spec.mode =
        j.at("spec").at("mode").get<std::string>() == "qat" ? QuantMode::QAT : QuantMode::PTQ;
    qs.spec.validate();
    for (auto it = j.at("sites").begin(); it != j.at("sites").end(); ++it) {
        ActQuantParams p;
        p.scale = it.value().at("scale").get<double>();
        p.zero_point = it.value().at("zero_point").get<double>();
        qs.sites[it.key()] = p;
    }
    return qs;
}

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model) {
    std::string base = checkpoint_base(path);
    std::string blob;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
    for (const auto& p : model.params()) {
        int64_t offset = static_cast<int64_t>(blob.size());
        for (S v : p.tensor.data()) io_detail::append_f32(blob, static_cast<float>(v));
        tensors[p.name] = {{"shape", p.tensor.shape()},
                           {"dtype", "f32"},
                           {"offset", offset},
                           {"bytes", p.tensor.numel() * 4}};
    }
    nlohmann::ordered_json manifest;
    manifest["format"] = "unisig-checkpoint-v1";
    manifest["config"] = model.config().to_json();
    manifest["tensors"] = std::move(tensors);
    if (model.quant_state()) manifest["quant"] = quant_to_json(*model.quant_state());
    io_detail::atomic_write(base + ".ckpt", manifest.dump(2) + "\n");
    io_detail::atomic_write(base + ".blob", blob);
}

template <typename S = float>
Model<S> load_checkpoint(const std::string& path) {
    std::string base = checkpoint_base(path);
    auto manifest = nlohmann::json::parse(io_detail::read_file(base + ".ckpt"));
    if (manifest.value("format", "") != "unisig-checkpoint-v1")
        throw IoError(base + ".ckpt: unrecognized checkpoint format");
    auto cfg = EncoderConfig::from_json(manifest.at("config"));
    Model<S> model(cfg, 0);
    auto blob = io_detail::read_file(base + ".blob");

    std::map<std::string, Tensor<S>> by_name;
    for (const auto& p : model.params()) by_name.emplace(p.name, p.tensor);
    const auto& tensors = manifest.at("tensors");
    for (auto it = tensors.begin(); it != tensors.end(); ++it)
        if (!by_name.count(it.key()))
            throw IoError("checkpoint carries unknown tensor: " + it.key());
    for (auto& [name, tensor] : by_name) {
        if (!tensors.contains(name)) throw IoError("checkpoint is missing tensor: " + name);
        const auto& entry = tensors.at(name);
        int64_t offset = entry.at("offset").get<int64_t>();
        int64_t bytes = entry.at("bytes").get<int64_t>();
        if (bytes != tensor.numel() * 4 ||
            offset + bytes > static_cast<int64_t>(blob.size()))
            throw IoError("checkpoint tensor " + name + " has inconsistent extent");
        Shape shape = entry.at("shape").get<Shape>();
        if (shape != tensor.shape()) throw IoError("checkpoint tensor " + name + " shape mismatch");
        for (int64_t i = 0; i < tensor.numel(); ++i)
            tensor.data()[i] =
                static_cast<S>(io_detail::read_f32(blob, static_cast<size_t>(offset + i * 4)));
    }
    if (manifest.contains("quant")) model.set_quant(quant_from_json(manifest.at("quant")));
    return model;
}

// ----------------------------- attention export -----------------------------

// Rows (patch,query,modality,score) with scores head-averaged and then
// averaged over the channels of each modality. The raw per-channel softmax
// rows sum to 1; averaging preserves interpretability per modality.
template <typename S>
void dump_attention(const Model<S>& model, const PatchGrid<S>& grid, std::ostream& out) {
    if (!model.attn_retention)
        throw ConfigError("dump_attention: attention retention is disabled on this model");
    auto ctx = model.make_context(nullptr, /*retain=*/true);
    auto state = model.unifier.unify(model.tokens_for(grid, nullptr, ctx), ctx);
    const auto& attn = state.attn;  // [P, Q, C]
    int64_t p = attn.dim(0), q = attn.dim(1), c = attn.dim(2);

    std::vector<Modality> present;
    for (Modality m : {Modality::EEG, Modality::ECG, Modality::PPG})
        for (const auto& ch : grid.meta)
            if (ch.modality == m) {
                present.push_back(m);
                break;
            }

    out << "patch,query,modality,score\n";
    char buf[64];
    for (int64_t pi = 0; pi < p; ++pi)
        for (int64_t qi = 0; qi < q; ++qi) {
            double row_sum = 0.0;
            for (int64_t ci = 0; ci < c; ++ci) row_sum += attn.at({pi, qi, ci});
            if (std::abs(row_sum - 1.0) > 1e-6)
                throw Error("dump_attention: attention row does not sum to 1");
            for (Modality m : present) {
                double sum = 0.0;
                int64_t count = 0;
                for (int64_t ci = 0; ci < c; ++ci)
                    if (grid.meta[ci].modality == m) {
                        sum += attn.at({pi, qi, ci});
                        count++;
                    }
                std::snprintf(buf, sizeof buf, "%.9g", sum / static_cast<double>(count));
                out << pi << "," << qi << "," << modality_name(m) << "," << buf << "\n";
            }
        }
}

}  // namespace unisig
