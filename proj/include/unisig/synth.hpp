#pragma once

// Seeded synthetic biosignals: 1/f EEG with alpha bursts, periodic biphasic
// ECG spikes with baseline wander, raised-cosine PPG pulse waves. Used for
// pretraining sanity runs, the classification task, and attention probes.

#include <array>
#include <string>
#include <vector>

#include "unisig/patch_embed.hpp"
#include "unisig/sigproc.hpp"
#include "unisig/trainer.hpp"

namespace unisig {

struct SynthOptions {
    int64_t channels = 1;
    double ecg_rate_hz = 1.0;
    double ppg_rate_hz = 1.0;
    double alpha_hz = 10.0;
    double alpha_amp = 1.0;
    double noise_amp = 0.05;
};

namespace synth_detail {

// Approximate 10-20 electrode positions, normalized to the unit cube.
inline const std::vector<std::pair<std::string, std::array<double, 3>>>& eeg_sites() {
    static const std::vector<std::pair<std::string, std::array<double, 3>>> sites = {
        {"Fp1", {-0.31, 0.95, 0.05}}, {"Fp2", {0.31, 0.95, 0.05}},
        {"F7", {-0.81, 0.59, 0.05}},  {"F3", {-0.42, 0.59, 0.54}},
        {"Fz", {0.0, 0.62, 0.72}},    {"F4", {0.42, 0.59, 0.54}},
        {"F8", {0.81, 0.59, 0.05}},   {"T3", {-1.0, 0.0, 0.05}},
        {"C3", {-0.55, 0.0, 0.78}},   {"Cz", {0.0, 0.0, 1.0}},
        {"C4", {0.55, 0.0, 0.78}},    {"T4", {1.0, 0.0, 0.05}},
        {"T5", {-0.81, -0.59, 0.05}}, {"P3", {-0.42, -0.59, 0.54}},
        {"Pz", {0.0, -0.62, 0.72}},   {"P4", {0.42, -0.59, 0.54}},
        {"T6", {0.81, -0.59, 0.05}},  {"O1", {-0.31, -0.95, 0.05}},
        {"O2", {0.31, -0.95, 0.05}},
    };
    return sites;
}

inline const std::vector<std::string>& ecg_leads() {
    static const std::vector<std::string> leads = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                                   "V1", "V2", "V3",  "V4",  "V5",  "V6"};
    return leads;
}

// Paul Kellet's economy pink-noise filter over white gaussian input.
inline std::vector<double> pink_noise(int64_t n, Rng& rng) {
    std::vector<double> out(n);
    double b0 = 0, b1 = 0, b2 = 0;
    for (int64_t i = 0; i < n; ++i) {
        double w = rng.gauss();
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        out[i] = (b0 + b1 + b2 + w * 0.1848) * 0.25;
    }
    return out;
}

inline std::vector<double> eeg_channel(int64_t n, double fs, const SynthOptions& o, Rng& rng) {
    auto x = pink_noise(n, rng);
    for (int64_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / fs;
        double env = std::sin(2.0 * M_PI * 0.5 * t);
        env = env > 0 ? env * env : 0.0;  // ~1 s bursts every 2 s
        x[i] += o.alpha_amp * env * std::sin(2.0 * M_PI * o.alpha_hz * t);
    }
    return x;
}

// Sharp biphasic spike train (QRS surrogate) plus slow baseline wander.
inline std::vector<double> ecg_channel(int64_t n, double fs, const SynthOptions& o, Rng& rng,
                                       double gain) {
    std::vector<double> x(n, 0.0);
    int64_t period = static_cast<int64_t>(std::llround(fs / o.ecg_rate_hz));
    // template: brief dip, tall R peak, deeper S dip, recovery
    std::vector<double> shape;
    for (int k = 0; k < 3; ++k) shape.push_back(-0.15 * (k + 1) / 3.0);
    for (int k = 0; k < 4; ++k) shape.push_back(-0.15 + (1.5 + 0.15) * (k + 1) / 4.0);
    for (int k = 0; k < 5; ++k) shape.push_back(1.5 - (1.5 + 0.6) * (k + 1) / 5.0);
    for (int k = 0; k < 4; ++k) shape.push_back(-0.6 + 0.6 * (k + 1) / 4.0);
    for (int64_t beat = period / 2; beat < n; beat += period)
        for (size_t k = 0; k < shape.size(); ++k)
            if (beat + static_cast<int64_t>(k) < n)
                x[beat + k] += gain * shape[k];
    for (int64_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / fs;
        x[i] += 0.12 * std::sin(2.0 * M_PI * 0.25 * t) + o.noise_amp * rng.gauss();
    }
    return x;
}

inline std::vector<double> ppg_channel(int64_t n, double fs, const SynthOptions& o, Rng& rng) {
    std::vector<double> x(n, 0.0);
    double period = fs / o.ppg_rate_hz;
    for (int64_t i = 0; i < n; ++i) {
        double phase = std::fmod(static_cast<double>(i), period) / period;
        if (phase < 0.6) x[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * phase / 0.6));
        x[i] += o.noise_amp * 0.4 * rng.gauss();
    }
    return x;
}

}  // namespace synth_detail

// Deterministic per (modality, seed, channel index). Output is at `fs`
// already, no resampling required.
inline MultimodalRecord generate_synthetic(Modality modality, double seconds,
                                           double fs = kTargetFs, uint64_t seed = 0,
                                           SynthOptions opts = {}) {
    if (seconds <= 0) throw ConfigError("generate_synthetic: seconds must be positive");
    int64_t n = static_cast<int64_t>(std::llround(seconds * fs));
    MultimodalRecord rec;
    rec.sample_rate_hz = fs;
    auto lead_table = LeadAngleTable::standard();
    for (int64_t c = 0; c < opts.channels; ++c) {
        Rng rng(derive_seed(seed, std::string(modality_name(modality)) + "." + std::to_string(c)));
        ChannelInfo info;
        info.modality = modality;
        switch (modality) {
            case Modality::EEG: {
                const auto& sites = synth_detail::eeg_sites();
                const auto& site = sites[static_cast<size_t>(c) % sites.size()];
                info.label = site.first;
                info.coords = site.second;
                rec.samples.push_back(synth_detail::eeg_channel(n, fs, opts, rng));
                break;
            }
            case Modality::ECG: {
                const auto& leads = synth_detail::ecg_leads();
                info.label = leads[static_cast<size_t>(c) % leads.size()];
                info.coords = lead_table.coords(info.label);
                // per-lead projection gain from the lead angle
                double gain = 0.6 + 0.4 * info.coords[0];
                rec.samples.push_back(synth_detail::ecg_channel(n, fs, opts, rng, gain));
                break;
            }
            case Modality::PPG: {
                info.label = "PPG" + std::to_string(c + 1);
                info.coords = {0.0, 0.0, 0.0};
                rec.samples.push_back(synth_detail::ppg_channel(n, fs, opts, rng));
                break;
            }
        }
        rec.channels.push_back(info);
    }
    return rec;
}

// Channel-concatenation of equally sampled records.
inline MultimodalRecord merge_records(const std::vector<MultimodalRecord>& parts) {
    if (parts.empty()) throw ValueError("merge_records: nothing to merge");
    MultimodalRecord out;
    out.sample_rate_hz = parts[0].sample_rate_hz;
    for (const auto& r : parts) {
        r.validate();
        if (r.sample_rate_hz != out.sample_rate_hz || r.num_samples() != parts[0].num_samples())
            throw ValueError("merge_records: sample rate / length mismatch");
        out.channels.insert(out.channels.end(), r.channels.begin(), r.channels.end());
        out.samples.insert(out.samples.end(), r.samples.begin(), r.samples.end());
    }
    return out;
}

// ----------------------------- synthetic classification task -----------------------------

// Two classes separated by cardiac rate and alpha power; every modality
// carries class signal so any channel subset stays informative.
struct TaskSpec {
    std::vector<Modality> channels = {Modality::EEG, Modality::EEG, Modality::ECG, Modality::PPG};
    double window_s = 2.0;
    int n_train_per_class = 40;
    int n_val_per_class = 20;
    double rate0 = 1.0, rate1 = 1.35;
    double alpha0 = 0.5, alpha1 = 1.5;
};

template <typename S = float>
LabeledWindow<S> make_task_window(const TaskSpec& spec, int label, uint64_t seed) {
    SynthOptions opts;
    opts.channels = 1;
    opts.ecg_rate_hz = label ? spec.rate1 : spec.rate0;
    opts.ppg_rate_hz = label ? spec.rate1 : spec.rate0;
    opts.alpha_amp = label ? spec.alpha1 : spec.alpha0;
    std::vector<MultimodalRecord> parts;
    for (size_t c = 0; c < spec.channels.size(); ++c)
        parts.push_back(generate_synthetic(spec.channels[c], spec.window_s, kTargetFs,
                                           derive_seed(seed, "ch" + std::to_string(c)), opts));
    auto rec = merge_records(parts);
    auto grids = segment_and_patch<S>(rec, spec.window_s);
    LabeledWindow<S> w;
    w.grid = grids.at(0);
    w.label = label;
    return w;
}

template <typename S = float>
TaskData<S> make_task(const TaskSpec& spec, uint64_t seed) {
    TaskData<S> task;
    task.num_classes = 2;
    for (int label = 0; label < 2; ++label) {
        for (int i = 0; i < spec.n_train_per_class; ++i)
            task.train.push_back(make_task_window<S>(
                spec, label, derive_seed(seed, "train." + std::to_string(label * 100000 + i))));
        for (int i = 0; i < spec.n_val_per_class; ++i)
            task.val.push_back(make_task_window<S>(
                spec, label, derive_seed(seed, "val." + std::to_string(label * 100000 + i))));
    }
    return task;
}

// Windows with only the channels of the requested modalities; the same
// encoder weights accept the reduced channel set without reconfiguration.
template <typename S>
std::vector<LabeledWindow<S>> subset_modalities(const std::vector<LabeledWindow<S>>& windows,
                                                const std::vector<Modality>& keep) {
    std::vector<LabeledWindow<S>> out;
    for (const auto& w : windows) {
        std::vector<int64_t> idx;
        for (int64_t c = 0; c < w.grid.channels(); ++c)
            for (Modality m : keep)
                if (w.grid.meta[c].modality == m) {
                    idx.push_back(c);
                    break;
                }
        if (idx.empty()) continue;
        LabeledWindow<S> sub;
        sub.label = w.label;
        sub.grid.window_s = w.grid.window_s;
        sub.grid.fs = w.grid.fs;
        int64_t p = w.grid.patches();
        sub.grid.values = Tensor<S>::zeros({static_cast<int64_t>(idx.size()), p, kPatchLen});
        for (size_t i = 0; i < idx.size(); ++i) {
            sub.grid.meta.push_back(w.grid.meta[idx[i]]);
            for (int64_t pi = 0; pi < p; ++pi)
                for (int64_t s = 0; s < kPatchLen; ++s)
                    sub.grid.values.at({static_cast<int64_t>(i), pi, s}) =
                        w.grid.values.at({idx[i], pi, s});
        }
        out.push_back(std::move(sub));
    }
    return out;
}

}  // namespace unisig
