#pragma once

// Uniform fake quantization: symmetric per-output-channel weights, asymmetric
// per-tensor activations with 99.9-percentile clipping. Forward rounds
// half-to-even onto the integer grid; backward is straight-through (identity
// inside the clip range, zero outside).

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "unisig/common.hpp"
#include "unisig/tensor.hpp"

namespace unisig {

enum class QuantMode { PTQ, QAT };

struct QuantSpec {
    int weight_bits = 8;
    int act_bits = 8;
    QuantMode mode = QuantMode::PTQ;

    void validate() const {
        bool ok = (weight_bits == 8 && act_bits == 8) || (weight_bits == 4 && act_bits == 8) ||
                  (weight_bits == 2 && act_bits == 8) || (weight_bits == 4 && act_bits == 4);
        if (!ok)
            throw ConfigError("quant: (W" + std::to_string(weight_bits) + ", A" +
                              std::to_string(act_bits) +
                              ") is not in the supported set {(8,8),(4,8),(2,8),(4,4)}");
    }
};

inline double round_half_even(double x) {
    double f = std::floor(x);
    double d = x - f;
    if (d > 0.5) return f + 1.0;
    if (d < 0.5) return f;
    return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

// Symmetric signed grid {-(2^{b-1}-1) .. 2^{b-1}-1}; INT2 uses {-1,0,1}.
inline int64_t sym_qmax(int bits) { return (int64_t(1) << (bits - 1)) - 1; }

// quantize-dequantize with explicit scale/zero-point. Symmetric when
// zero_point == 0 on the signed grid; asymmetric uses the unsigned grid
// [0, 2^bits - 1].
template <typename S>
Tensor<S> qdq(const Tensor<S>& x, int bits, double scale, double zero_point,
              bool symmetric = true) {
    if (scale <= 0.0) throw CalibrationError("qdq: scale must be positive");
    if (bits < 2 || bits > 8) throw ConfigError("qdq: bits out of range");
    double qmin = symmetric ? -static_cast<double>(sym_qmax(bits)) : 0.0;
    double qmax = symmetric ? static_cast<double>(sym_qmax(bits))
                            : static_cast<double>((int64_t(1) << bits) - 1);
    double lo = (qmin - zero_point) * scale;
    double hi = (qmax - zero_point) * scale;
    std::vector<S> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        double q = round_half_even(static_cast<double>(x.data()[i]) / scale) + zero_point;
        q = std::min(std::max(q, qmin), qmax);
        out[i] = static_cast<S>((q - zero_point) * scale);
    }
    auto xn = x.node();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn, lo, hi](TensorNode<S>& n) {
        xn->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double v = xn->data[i];
            if (v >= lo && v <= hi) xn->grad[i] += n.grad[i];
        }
    });
}

// Per-output-channel symmetric weight fake-quant for a [d_in, d_out] matrix;
// scales derived from the current weight values (max |w| per column).
template <typename S>
Tensor<S> qdq_weight_per_channel(const Tensor<S>& w, int bits) {
    if (w.rank() != 2) throw ShapeError("qdq_weight_per_channel: expected 2-D weight");
    int64_t rows = w.dim(0), cols = w.dim(1);
    double qmax = static_cast<double>(sym_qmax(bits));
    std::vector<double> scales(static_cast<size_t>(cols));
    for (int64_t c = 0; c < cols; ++c) {
        double mx = 0.0;
        for (int64_t r = 0; r < rows; ++r)
            mx = std::max(mx, std::abs(static_cast<double>(w.data()[r * cols + c])));
        scales[c] = std::max(mx / qmax, 1e-8);
    }
    std::vector<S> out(w.data().size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            double s = scales[c];
            double q = round_half_even(static_cast<double>(w.data()[r * cols + c]) / s);
            q = std::min(std::max(q, -qmax), qmax);
            out[r * cols + c] = static_cast<S>(q * s);
        }
    auto wn = w.node();
    auto sc = std::make_shared<std::vector<double>>(std::move(scales));
    return detail::make_result<S>(w.shape(), std::move(out), {w},
                                  [wn, sc, rows, cols, qmax](TensorNode<S>& n) {
        wn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) {
                double bound = (*sc)[c] * qmax;
                double v = wn->data[r * cols + c];
                if (v >= -bound && v <= bound) wn->grad[r * cols + c] += n.grad[r * cols + c];
            }
    });
}

// ----------------------------- calibration -----------------------------

// Running min/max plus a fixed-width histogram of absolute values whose
// range doubles on demand; deterministic and order-independent.
class SiteStats {
public:
    void add(double v) {
        min_ = std::min(min_, v);
        max_ = std::max(max_, v);
        double a = std::abs(v);
        while (a > cap_) rebin();
        auto idx = static_cast<size_t>(a / cap_ * kBins);
        if (idx >= kBins) idx = kBins - 1;
        bins_[idx]++;
        count_++;
    }

    template <typename S>
    void add_all(const std::vector<S>& vals) {
        for (S v : vals) add(static_cast<double>(v));
    }

    int64_t count() const { return count_; }
    double min() const { return count_ ? min_ : 0.0; }
    double max() const { return count_ ? max_ : 0.0; }

    // q-th percentile of |x| by cumulative histogram walk with in-bin
    // linear interpolation.
    double percentile_abs(double q) const {
        if (count_ == 0) throw CalibrationError("percentile of empty site");
        double target = q * static_cast<double>(count_);
        int64_t cum = 0;
        for (size_t i = 0; i < kBins; ++i) {
            if (cum + bins_[i] >= target) {
                double frac = bins_[i] ? (target - cum) / static_cast<double>(bins_[i]) : 0.0;
                return (static_cast<double>(i) + frac) * cap_ / kBins;
            }
            cum += bins_[i];
        }
        return cap_;
    }

private:
    static constexpr size_t kBins = 4096;

    void rebin() {
        for (size_t i = 0; i < kBins / 2; ++i) bins_[i] = bins_[2 * i] + bins_[2 * i + 1];
        for (size_t i = kBins / 2; i < kBins; ++i) bins_[i] = 0;
        cap_ *= 2.0;
    }

    double min_ = std::numeric_limits<double>::infinity();
    double max_ = -std::numeric_limits<double>::infinity();
    double cap_ = 1.0;
    std::vector<int64_t> bins_ = std::vector<int64_t>(kBins, 0);
    int64_t count_ = 0;
};

struct CalibStats {
    std::map<std::string, SiteStats> sites;
    double percentile = 0.999;

    void record(const std::string& name, const std::vector<float>& vals) {
        sites[name].add_all(vals);
    }
    void record(const std::string& name, const std::vector<double>& vals) {
        sites[name].add_all(vals);
    }
};

// Resolved activation quantizer for one site: asymmetric per-tensor grid on
// the percentile-clipped observed range.
struct ActQuantParams {
    double scale = 1e-8;
    double zero_point = 0.0;
};

inline ActQuantParams resolve_act_params(const SiteStats& st, int bits, double pct = 0.999) {
    double p = st.percentile_abs(pct);
    double lo = std::max(st.min(), -p);
    double hi = std::min(st.max(), p);
    if (lo > hi) std::swap(lo, hi);
    double levels = static_cast<double>((int64_t(1) << bits) - 1);
    ActQuantParams out;
    out.scale = std::max((hi - lo) / levels, 1e-8);
    out.zero_point = std::min(std::max(round_half_even(-lo / out.scale), 0.0), levels);
    return out;
}

// Activation sites keyed by layer name; filled by apply_ptq / QAT setup.
struct QuantState {
    QuantSpec spec;
    std::map<std::string, ActQuantParams> sites;
};

// Theoretical packed storage for a parameter set.
struct PackedSize {
    int64_t payload_bytes = 0;        // quantized weight payload
    int64_t overhead_bytes = 0;       // per-channel scales
    int64_t fp32_passthrough = 0;     // tensors kept at FP32
    int64_t fp32_eligible_bytes = 0;  // FP32 size of the quantized tensors
    int64_t total() const { return payload_bytes + overhead_bytes + fp32_passthrough; }
};

inline int64_t packed_payload_bytes(int64_t count, int bits) {
    return (static_cast<int64_t>(bits) * count + 7) / 8;
}

}  // namespace unisig
