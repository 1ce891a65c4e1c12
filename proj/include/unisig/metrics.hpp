#pragma once

// Evaluation metrics: balanced accuracy, Cohen's kappa, weighted F1,
// AUROC (rank statistic, macro one-vs-rest beyond binary), and AUC-PR
// (step interpolation).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "unisig/common.hpp"

namespace unisig {

struct MetricBundle {
    double balanced_accuracy = 0.0;
    double cohen_kappa = 0.0;
    double weighted_f1 = 0.0;
    double auroc = 0.0;
    double auc_pr = 0.0;
};

namespace detail {

// AUROC via the Mann-Whitney rank statistic with average ranks for ties.
inline double rank_auroc(const std::vector<double>& scores, const std::vector<int>& positive) {
    size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    int64_t n_pos = 0;
    for (size_t k = 0; k < n; ++k)
        if (positive[k]) {
            rank_sum += ranks[k];
            n_pos++;
        }
    int64_t n_neg = static_cast<int64_t>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw MetricError("AUROC undefined for a single-class set");
    return (rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision by step interpolation over descending score thresholds.
inline double step_auc_pr(const std::vector<double>& scores, const std::vector<int>& positive) {
    size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    int64_t n_pos = 0;
    for (int v : positive) n_pos += v;
    if (n_pos == 0) throw MetricError("AUC-PR undefined without positives");
    double ap = 0.0, prev_recall = 0.0;
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;  // process equal scores as one threshold
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (size_t k = i; k <= j; ++k)
            positive[order[k]] ? ++tp : ++fp;
        double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

}  // namespace detail

// labels in [0, K); scores[i] holds per-class probabilities (or scores) for
// sample i. Throws MetricError when fewer than two classes are present.
inline MetricBundle compute_metrics(const std::vector<int>& labels,
                                    const std::vector<std::vector<double>>& scores) {
    if (labels.empty() || labels.size() != scores.size())
        throw MetricError("compute_metrics: labels/scores size mismatch");
    int k = static_cast<int>(scores[0].size());
    if (k < 2) throw MetricError("compute_metrics: need at least two score columns");
    for (int v : labels)
        if (v < 0 || v >= k) throw MetricError("compute_metrics: label out of range");

    size_t n = labels.size();
    std::vector<std::vector<int64_t>> conf(k, std::vector<int64_t>(k, 0));
    for (size_t i = 0; i < n; ++i) {
        int pred = 0;
        for (int c = 1; c < k; ++c)
            if (scores[i][c] > scores[i][pred]) pred = c;
        conf[labels[i]][pred]++;
    }
    std::vector<int64_t> support(k, 0), predicted(k, 0);
    for (int c = 0; c < k; ++c)
        for (int j = 0; j < k; ++j) {
            support[c] += conf[c][j];
            predicted[j] += conf[c][j];
        }
    int present = 0;
    for (int c = 0; c < k; ++c) present += support[c] > 0;
    if (present < 2)
        throw MetricError("compute_metrics: kappa/AUROC undefined for a single-class label set");

    MetricBundle m;
    double recall_sum = 0.0;
    for (int c = 0; c < k; ++c)
        if (support[c] > 0)
            recall_sum += static_cast<double>(conf[c][c]) / static_cast<double>(support[c]);
    m.balanced_accuracy = recall_sum / present;

    double po = 0.0, pe = 0.0;
    for (int c = 0; c < k; ++c) po += conf[c][c];
    po /= static_cast<double>(n);
    for (int c = 0; c < k; ++c)
        pe += static_cast<double>(support[c]) * static_cast<double>(predicted[c]);
    pe /= static_cast<double>(n) * static_cast<double>(n);
    m.cohen_kappa = (po - pe) / (1.0 - pe);

    double wf1 = 0.0;
    for (int c = 0; c < k; ++c) {
        if (support[c] == 0) continue;
        double prec = predicted[c] > 0
                          ? static_cast<double>(conf[c][c]) / static_cast<double>(predicted[c])
                          : 0.0;
        double rec = static_cast<double>(conf[c][c]) / static_cast<double>(support[c]);
        double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        wf1 += f1 * static_cast<double>(support[c]) / static_cast<double>(n);
    }
    m.weighted_f1 = wf1;

    // macro one-vs-rest over classes with both positives and negatives
    double auroc_sum = 0.0, ap_sum = 0.0;
    int auroc_classes = 0;
    for (int c = 0; c < k; ++c) {
        if (support[c] == 0 || support[c] == static_cast<int64_t>(n)) continue;
        std::vector<double> col(n);
        std::vector<int> pos(n);
        for (size_t i = 0; i < n; ++i) {
            col[i] = scores[i][c];
            pos[i] = labels[i] == c;
        }
        auroc_sum += detail::rank_auroc(col, pos);
        ap_sum += detail::step_auc_pr(col, pos);
        auroc_classes++;
    }
    if (auroc_classes == 0) throw MetricError("compute_metrics: AUROC undefined");
    m.auroc = auroc_sum / auroc_classes;
    m.auc_pr = ap_sum / auroc_classes;
    return m;
}

}  // namespace unisig
