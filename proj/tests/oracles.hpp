#pragma once

// Test-side oracles, kept independent of the library implementation paths
// they check: central finite differences, a naive O(N^2) DFT, analog
// filter magnitude responses, and brute-force metric enumeration.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "unisig/tensor.hpp"

namespace oracles {

// Central finite differences of a scalar function w.r.t. one parameter
// tensor, step h in double precision.
inline std::vector<double> finite_diff(const std::function<double()>& f,
                                       std::vector<double>& param, double h = 1e-5) {
    std::vector<double> g(param.size());
    for (size_t i = 0; i < param.size(); ++i) {
        double keep = param[i];
        param[i] = keep + h;
        double fp = f();
        param[i] = keep - h;
        double fm = f();
        param[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Largest relative error between analytic and finite-difference gradients.
inline double max_rel_err(const std::vector<double>& analytic,
                          const std::vector<double>& fd) {
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-6});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

// Runs backward() on loss_fn(), then compares every tensor in `params`
// against central finite differences. Returns the worst relative error.
inline double gradient_check(const std::function<unisig::Tensor<double>()>& loss_fn,
                             std::vector<unisig::Tensor<double>> params, double h = 1e-5) {
    auto loss = loss_fn();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) analytic.push_back(p.grad().data());

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto f = [&]() { return loss_fn().item(); };
        auto fd = finite_diff(f, params[pi].data(), h);
        worst = std::max(worst, max_rel_err(analytic[pi], fd));
    }
    return worst;
}

// Naive O(N^2) real-input DFT magnitude, bins 0..N/2.
inline std::vector<double> naive_dft_mag(const std::vector<double>& x) {
    size_t n = x.size();
    std::vector<double> mags(n / 2 + 1);
    for (size_t k = 0; k <= n / 2; ++k) {
        double re = 0.0, im = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double th = 2.0 * M_PI * static_cast<double>(k * i) / static_cast<double>(n);
            re += x[i] * std::cos(th);
            im -= x[i] * std::sin(th);
        }
        mags[k] = std::hypot(re, im);
    }
    return mags;
}

// Analog Butterworth bandpass magnitude (order-N lowpass prototype under the
// standard s -> (s^2 + w0^2)/(B s) transform), evaluated at the analog
// frequency the bilinear transform maps a digital frequency onto. Because the
// bilinear map preserves magnitudes exactly, this is the expected gain of the
// digital filter at f_hz.
inline double butter_bandpass_gain(double f_hz, double lo_hz, double hi_hz, double fs,
                                   int order) {
    auto prewarp = [fs](double f) { return 2.0 * fs * std::tan(M_PI * f / fs); };
    double wl = prewarp(lo_hz), wh = prewarp(hi_hz);
    double w0 = std::sqrt(wl * wh), bw = wh - wl;
    double w = prewarp(f_hz);
    if (w == 0.0) return 0.0;
    double lambda = (w * w - w0 * w0) / (bw * w);
    return 1.0 / std::sqrt(1.0 + std::pow(lambda, 2.0 * order));
}

// Analog notch prototype H(s) = (s^2 + w0^2) / (s^2 + (w0/Q) s + w0^2),
// evaluated through the same prewarped-frequency map.
inline double notch_gain(double f_hz, double notch_hz, double q, double fs) {
    auto prewarp = [fs](double f) { return 2.0 * fs * std::tan(M_PI * f / fs); };
    double w0 = prewarp(notch_hz);
    double w = prewarp(f_hz);
    std::complex<double> s(0.0, w);
    std::complex<double> num = s * s + w0 * w0;
    std::complex<double> den = s * s + (w0 / q) * s + w0 * w0;
    return std::abs(num / den);
}

// ---- metric oracles: direct enumeration from definitions ----

struct BruteMetrics {
    double bal_acc, kappa, weighted_f1, auroc;
};

inline BruteMetrics brute_force_metrics(const std::vector<int>& labels,
                                        const std::vector<std::vector<double>>& scores) {
    int k = static_cast<int>(scores[0].size());
    size_t n = labels.size();
    std::vector<std::vector<long>> conf(k, std::vector<long>(k, 0));
    for (size_t i = 0; i < n; ++i) {
        int pred = 0;
        for (int c = 1; c < k; ++c)
            if (scores[i][c] > scores[i][pred]) pred = c;
        conf[labels[i]][pred]++;
    }
    // balanced accuracy: mean recall over classes with support
    double recsum = 0.0;
    int present = 0;
    for (int c = 0; c < k; ++c) {
        long row = 0;
        for (int j = 0; j < k; ++j) row += conf[c][j];
        if (row > 0) {
            recsum += static_cast<double>(conf[c][c]) / static_cast<double>(row);
            present++;
        }
    }
    double bal_acc = recsum / present;
    // kappa
    double po = 0.0, pe = 0.0;
    for (int c = 0; c < k; ++c) po += conf[c][c];
    po /= static_cast<double>(n);
    for (int c = 0; c < k; ++c) {
        long row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += conf[c][j];
            col += conf[j][c];
        }
        pe += static_cast<double>(row) * static_cast<double>(col);
    }
    pe /= static_cast<double>(n) * static_cast<double>(n);
    double kappa = (po - pe) / (1.0 - pe);
    // weighted F1
    double wf1 = 0.0;
    for (int c = 0; c < k; ++c) {
        long row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += conf[c][j];
            col += conf[j][c];
        }
        if (row == 0) continue;
        double prec = col > 0 ? static_cast<double>(conf[c][c]) / col : 0.0;
        double rec = static_cast<double>(conf[c][c]) / row;
        double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        wf1 += f1 * static_cast<double>(row) / static_cast<double>(n);
    }
    // macro one-vs-rest AUROC by exhaustive pair comparison, ties 0.5
    double auc_sum = 0.0;
    int auc_classes = 0;
    for (int c = 0; c < k; ++c) {
        double wins = 0.0;
        long pairs = 0;
        for (size_t i = 0; i < n; ++i) {
            if (labels[i] != c) continue;
            for (size_t j = 0; j < n; ++j) {
                if (labels[j] == c) continue;
                pairs++;
                if (scores[i][c] > scores[j][c])
                    wins += 1.0;
                else if (scores[i][c] == scores[j][c])
                    wins += 0.5;
            }
        }
        if (pairs > 0) {
            auc_sum += wins / static_cast<double>(pairs);
            auc_classes++;
        }
    }
    double auroc = auc_classes > 0 ? auc_sum / auc_classes : 0.0;
    return {bal_acc, kappa, wf1, auroc};
}

}  // namespace oracles
