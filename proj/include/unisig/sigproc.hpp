#pragma once

// Signal conditioning: modality-specific Butterworth bandpass, mains notch,
// rational resampling to 256 Hz, channel-wise z-scoring, and windowing into
// (channel x patch x 32) grids. Filters are designed from the analog
// prototype via the bilinear transform with frequency pre-warping and applied
// zero-phase (forward-backward).

#include <array>
#include <cmath>
#include <complex>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "unisig/common.hpp"
#include "unisig/tensor.hpp"

namespace unisig {

constexpr double kTargetFs = 256.0;
constexpr int64_t kPatchLen = 32;

// ----------------------------- domain types -----------------------------

struct ChannelInfo {
    Modality modality = Modality::EEG;
    std::string label;
    std::array<double, 3> coords{0.0, 0.0, 0.0};
};

struct MultimodalRecord {
    double sample_rate_hz = kTargetFs;
    std::vector<ChannelInfo> channels;
    std::vector<std::vector<double>> samples;  // per channel, equal lengths

    int64_t num_channels() const { return static_cast<int64_t>(channels.size()); }
    int64_t num_samples() const { return samples.empty() ? 0 : static_cast<int64_t>(samples[0].size()); }

    void validate() const {
        if (channels.size() != samples.size())
            throw ValueError("record: channel metadata / sample buffer count mismatch");
        for (const auto& s : samples)
            if (static_cast<int64_t>(s.size()) != num_samples())
                throw ValueError("record: channels must share a common length");
    }
};

enum class FilterKind { Bandpass, Notch };

struct FilterSpec {
    FilterKind kind = FilterKind::Bandpass;
    int order = 4;  // bandpass prototype order, fixed at 4
    double low_hz = 0.0;
    double high_hz = 0.0;
    double notch_hz = 0.0;
    double q = 30.0;  // notch quality factor
    double sample_rate_hz = kTargetFs;

    static FilterSpec bandpass(double lo, double hi, double fs) {
        FilterSpec s;
        s.kind = FilterKind::Bandpass;
        s.low_hz = lo;
        s.high_hz = hi;
        s.sample_rate_hz = fs;
        return s;
    }

    static FilterSpec notch(double f0, double fs, double q = 30.0) {
        FilterSpec s;
        s.kind = FilterKind::Notch;
        s.notch_hz = f0;
        s.q = q;
        s.sample_rate_hz = fs;
        return s;
    }

    void validate() const {
        double nyq = sample_rate_hz / 2.0;
        if (sample_rate_hz <= 0) throw ConfigError("filter: sample rate must be positive");
        if (kind == FilterKind::Bandpass) {
            if (order != 4) throw ConfigError("filter: bandpass order is fixed at 4");
            if (!(0.0 < low_hz && low_hz < high_hz && high_hz < nyq))
                throw ConfigError("filter: need 0 < low < high < Nyquist, got [" +
                                  std::to_string(low_hz) + ", " + std::to_string(high_hz) +
                                  ") at fs=" + std::to_string(sample_rate_hz));
        } else {
            if (!(0.0 < notch_hz && notch_hz < nyq))
                throw ConfigError("filter: notch frequency must lie below Nyquist");
            if (q <= 0) throw ConfigError("filter: notch Q must be positive");
        }
    }
};

// Default pretraining bands per modality.
inline FilterSpec default_bandpass(Modality m, double fs) {
    switch (m) {
        case Modality::EEG: return FilterSpec::bandpass(0.1, 75.0, fs);
        case Modality::ECG: return FilterSpec::bandpass(0.5, 120.0, fs);
        case Modality::PPG: return FilterSpec::bandpass(0.5, 8.0, fs);
    }
    throw ConfigError("unknown modality");
}

// ----------------------------- IIR machinery -----------------------------

namespace dsp {

struct Biquad {
    // y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
    double b0, b1, b2, a1, a2;
};

inline void filter_forward(const std::vector<Biquad>& sos, std::vector<double>& x) {
    for (const auto& s : sos) {
        double z1 = 0.0, z2 = 0.0;  // direct form II transposed state
        for (auto& v : x) {
            double y = s.b0 * v + z1;
            z1 = s.b1 * v - s.a1 * y + z2;
            z2 = s.b2 * v - s.a2 * y;
            v = y;
        }
    }
}

inline std::complex<double> sos_response(const std::vector<Biquad>& sos, double omega) {
    std::complex<double> z = std::polar(1.0, omega);
    std::complex<double> zi = 1.0 / z;
    std::complex<double> h = 1.0;
    for (const auto& s : sos)
        h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
    return h;
}

// Order-N Butterworth bandpass as N biquad sections. Analog lowpass
// prototype poles, s -> (s^2 + w0^2)/(bw s) transform, bilinear with
// pre-warped band edges, gain normalized at the geometric band center.
inline std::vector<Biquad> design_butter_bandpass(int order, double lo_hz, double hi_hz,
                                                  double fs) {
    const double k = 2.0 * fs;
    auto prewarp = [&](double f) { return k * std::tan(M_PI * f / fs); };
    double wl = prewarp(lo_hz), wh = prewarp(hi_hz);
    double w0 = std::sqrt(wl * wh), bw = wh - wl;

    using cd = std::complex<double>;
    std::vector<cd> analog_poles;
    for (int i = 0; i < order; ++i) {
        double theta = M_PI * (2.0 * i + 1.0) / (2.0 * order) + M_PI / 2.0;
        cd proto = std::polar(1.0, theta);  // left half-plane prototype pole
        // s^2 - (proto*bw) s + w0^2 = 0
        cd pb = proto * bw;
        cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
        analog_poles.push_back((pb + disc) / 2.0);
        analog_poles.push_back((pb - disc) / 2.0);
    }
    // keep one pole per conjugate pair (positive imaginary part)
    std::vector<cd> upper;
    for (const auto& p : analog_poles)
        if (p.imag() > 0.0) upper.push_back(p);
    if (static_cast<int>(upper.size()) != order)
        throw ConfigError("filter: degenerate band edges for Butterworth design");

    std::vector<Biquad> sos;
    for (const auto& p : upper) {
        cd zp = (k + p) / (k - p);  // bilinear pole map
        double a1 = -2.0 * zp.real();
        double a2 = std::norm(zp);
        // zeros at z = +1 and z = -1 from the analog zeros at 0 and infinity
        sos.push_back({1.0, 0.0, -1.0, a1, a2});
    }
    double wc = 2.0 * std::atan(w0 / k);  // digital center frequency
    double g = std::abs(sos_response(sos, wc));
    double per_section = std::pow(1.0 / g, 1.0 / order);
    for (auto& s : sos) {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    return sos;
}

inline Biquad design_notch(double f0, double q, double fs) {
    const double k = 2.0 * fs;
    double w0 = k * std::tan(M_PI * f0 / fs);
    double b0 = k * k + w0 * w0;
    double b1 = 2.0 * (w0 * w0 - k * k);
    double a0 = k * k + w0 * k / q + w0 * w0;
    double a2 = k * k - w0 * k / q + w0 * w0;
    return {b0 / a0, b1 / a0, b0 / a0, b1 / a0, a2 / a0};
}

// Forward-backward application with odd-reflection padding: linear phase,
// squared magnitude response.
inline std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                                    double fs, double low_hz_hint) {
    if (x.empty()) return {};
    int64_t n = static_cast<int64_t>(x.size());
    // padding must outlast the slowest pole's transient
    int64_t pad = static_cast<int64_t>(std::min<double>(
        static_cast<double>(n - 1),
        std::max(24.0 + 12.0 * static_cast<double>(sos.size()),
                 low_hz_hint > 0 ? 2.0 * fs / low_hz_hint : fs)));
    std::vector<double> ext;
    ext.reserve(x.size() + 2 * pad);
    for (int64_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (int64_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    filter_forward(sos, ext);
    std::reverse(ext.begin(), ext.end());
    filter_forward(sos, ext);
    std::reverse(ext.begin(), ext.end());
    return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

}  // namespace dsp

// ----------------------------- operations -----------------------------

// Zero-phase 4th-order Butterworth bandpass. A high cutoff at or above
// Nyquist is clamped to 0.99*Nyquist with a warning; other invalid specs
// are rejected.
inline std::vector<double> bandpass_filter(const std::vector<double>& x, FilterSpec spec) {
    if (spec.kind != FilterKind::Bandpass) throw ConfigError("bandpass_filter: wrong spec kind");
    double nyq = spec.sample_rate_hz / 2.0;
    if (spec.high_hz >= nyq) {
        double clamped = 0.99 * nyq;
        std::cerr << "[unisig] warning: bandpass high cutoff " << spec.high_hz
                  << " Hz >= Nyquist at fs=" << spec.sample_rate_hz << ", clamping to " << clamped
                  << " Hz\n";
        spec.high_hz = clamped;
    }
    spec.validate();
    auto sos = dsp::design_butter_bandpass(spec.order, spec.low_hz, spec.high_hz,
                                           spec.sample_rate_hz);
    return dsp::filtfilt(sos, x, spec.sample_rate_hz, spec.low_hz);
}

// Zero-phase second-order IIR notch, Q=30 default.
inline std::vector<double> notch_filter(const std::vector<double>& x, double notch_hz, double fs,
                                        double q = 30.0) {
    auto spec = FilterSpec::notch(notch_hz, fs, q);
    spec.validate();
    std::vector<dsp::Biquad> sos = {dsp::design_notch(notch_hz, q, fs)};
    return dsp::filtfilt(sos, x, fs, notch_hz / q);
}

// Analytic magnitude of the digital filters (coefficient route; the test
// suite checks it against the analog-prototype closed form, the time-domain
// path against both). Zero-phase application squares this.
inline double bandpass_gain(const FilterSpec& spec, double f_hz) {
    auto sos = dsp::design_butter_bandpass(spec.order, spec.low_hz, spec.high_hz,
                                           spec.sample_rate_hz);
    return std::abs(dsp::sos_response(sos, 2.0 * M_PI * f_hz / spec.sample_rate_hz));
}

namespace dsp {

// Kaiser-windowed sinc lowpass, scipy resample_poly recipe.
inline double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (x / (2.0 * k)) * (x / (2.0 * k));
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

inline std::vector<double> kaiser_lowpass(int64_t half_len, double cutoff, double beta) {
    int64_t taps = 2 * half_len + 1;
    std::vector<double> h(taps);
    double denom = bessel_i0(beta);
    for (int64_t i = 0; i < taps; ++i) {
        double m = static_cast<double>(i - half_len);
        double sinc = m == 0.0 ? 2.0 * cutoff
                               : std::sin(2.0 * M_PI * cutoff * m) / (M_PI * m);
        double r = 2.0 * static_cast<double>(i) / static_cast<double>(taps - 1) - 1.0;
        double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
        h[i] = sinc * w;
    }
    return h;
}

}  // namespace dsp

// Polyphase rational resampling with anti-alias lowpass; output length is
// round(len * to / from). Integer rates only.
inline std::vector<double> resample(const std::vector<double>& x, double from_hz,
                                    double to_hz = kTargetFs) {
    if (from_hz <= 0 || to_hz <= 0) throw ConfigError("resample: rates must be positive");
    int64_t up = static_cast<int64_t>(std::llround(to_hz));
    int64_t down = static_cast<int64_t>(std::llround(from_hz));
    if (std::abs(from_hz - static_cast<double>(down)) > 1e-9 ||
        std::abs(to_hz - static_cast<double>(up)) > 1e-9)
        throw ConfigError("resample: integer sample rates required");
    int64_t g = std::gcd(up, down);
    up /= g;
    down /= g;
    if (up == down) return x;

    int64_t n = static_cast<int64_t>(x.size());
    int64_t n_out = static_cast<int64_t>(std::llround(static_cast<double>(n) * to_hz / from_hz));
    int64_t max_rate = std::max(up, down);
    int64_t half = 10 * max_rate;
    auto h = dsp::kaiser_lowpass(half, 0.5 / static_cast<double>(max_rate), 5.0);
    int64_t taps = static_cast<int64_t>(h.size());

    std::vector<double> y(n_out, 0.0);
    for (int64_t k = 0; k < n_out; ++k) {
        int64_t u = k * down + half;  // center-aligned position in the upsampled grid
        int64_t i_hi = u / up;
        int64_t i_lo = (u - (taps - 1) + up - 1) / up;  // ceil((u - taps + 1) / up)
        if (i_lo < 0) i_lo = 0;
        if (i_hi > n - 1) i_hi = n - 1;
        double acc = 0.0;
        for (int64_t i = i_lo; i <= i_hi; ++i) {
            int64_t t = u - i * up;
            acc += h[t] * x[i];
        }
        y[k] = acc * static_cast<double>(up);
    }
    return y;
}

// (x - mean) / (std + 1e-8), population std.
inline std::vector<double> zscore_normalize(const std::vector<double>& x) {
    if (x.empty()) return {};
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    double denom = std::sqrt(var) + 1e-8;
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / denom;
    return y;
}

// ----------------------------- patching -----------------------------

template <typename S = float>
struct PatchGrid {
    Tensor<S> values;  // [C, P, 32]
    std::vector<ChannelInfo> meta;
    double window_s = 0.0;
    double fs = kTargetFs;

    int64_t channels() const { return values.dim(0); }
    int64_t patches() const { return values.dim(1); }
};

// Cuts a 256 Hz record into non-overlapping windows (trailing remainder
// dropped) and 32-sample patches. Each channel is z-scored per window so
// every grid carries normalized values regardless of upstream scaling.
template <typename S = float>
std::vector<PatchGrid<S>> segment_and_patch(const MultimodalRecord& rec, double window_s) {
    rec.validate();
    if (std::abs(rec.sample_rate_hz - kTargetFs) > 1e-9)
        throw ConfigError("segment_and_patch: record must be at 256 Hz (resample first)");
    int64_t win = static_cast<int64_t>(std::llround(window_s * kTargetFs));
    if (win < kPatchLen) throw ConfigError("segment_and_patch: window shorter than one patch");
    if (win % kPatchLen != 0)
        throw ConfigError("segment_and_patch: window must be a whole number of 32-sample patches");
    int64_t c = rec.num_channels();
    if (c == 0) throw ValueError("segment_and_patch: record has no channels");
    int64_t p = win / kPatchLen;
    int64_t n_windows = rec.num_samples() / win;

    std::vector<PatchGrid<S>> grids;
    for (int64_t w = 0; w < n_windows; ++w) {
        PatchGrid<S> g;
        g.meta = rec.channels;
        g.window_s = window_s;
        g.fs = kTargetFs;
        g.values = Tensor<S>::zeros({c, p, kPatchLen});
        for (int64_t ch = 0; ch < c; ++ch) {
            std::vector<double> seg(rec.samples[ch].begin() + w * win,
                                    rec.samples[ch].begin() + (w + 1) * win);
            seg = zscore_normalize(seg);
            for (int64_t i = 0; i < win; ++i)
                g.values.at({ch, i / kPatchLen, i % kPatchLen}) = static_cast<S>(seg[i]);
        }
        grids.push_back(std::move(g));
    }
    return grids;
}

// Full conditioning pipeline at the record level: modality bandpass, mains
// notch, resample to 256 Hz, channel-wise z-score.
inline MultimodalRecord condition_record(const MultimodalRecord& rec, double notch_hz = 50.0) {
    rec.validate();
    MultimodalRecord out;
    out.channels = rec.channels;
    out.sample_rate_hz = kTargetFs;
    for (int64_t ch = 0; ch < rec.num_channels(); ++ch) {
        auto spec = default_bandpass(rec.channels[ch].modality, rec.sample_rate_hz);
        auto y = bandpass_filter(rec.samples[ch], spec);
        if (notch_hz > 0 && notch_hz < rec.sample_rate_hz / 2.0)
            y = notch_filter(y, notch_hz, rec.sample_rate_hz);
        y = resample(y, rec.sample_rate_hz, kTargetFs);
        out.samples.push_back(zscore_normalize(y));
    }
    return out;
}

}  // namespace unisig
