#pragma once

// Threshold-sweep evaluation measures. Every sweep uses the threshold set
// {+inf} U {distinct score values}, descending, with y_hat = 1(s >= tau).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "paano/error.hpp"

namespace paano {

struct MetricReport {
    double vus_pr = 0.0;
    double vus_roc = 0.0;
    double range_f1 = 0.0;
    double auc_pr = 0.0;
    double auc_roc = 0.0;
    double point_f1 = 0.0;
    std::size_t lag = 0;
};

namespace detail {

inline void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw DataError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                        std::to_string(labels.size()) + ")");
    }
    bool pos = false;
    bool neg = false;
    for (auto y : labels) {
        if (y > 1) throw DataError("labels must be 0 or 1");
        pos = pos || y == 1;
        neg = neg || y == 0;
    }
    if (!pos || !neg) throw DataError("labels contain a single class; the measure is undefined");
    for (double s : scores) {
        if (!std::isfinite(s)) throw DataError("scores must be finite");
    }
}

// Indices by descending score plus the [begin, end) bounds of each tie group.
struct ScoreOrder {
    std::vector<std::size_t> index;
    std::vector<std::size_t> group_end;
};

inline ScoreOrder order_scores(std::span<const double> scores) {
    ScoreOrder o;
    o.index.resize(scores.size());
    std::iota(o.index.begin(), o.index.end(), std::size_t{0});
    std::stable_sort(o.index.begin(), o.index.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t i = 0; i < o.index.size(); ++i) {
        if (i + 1 == o.index.size() || scores[o.index[i + 1]] != scores[o.index[i]]) o.group_end.push_back(i + 1);
    }
    return o;
}

// Trapezoidal ROC area with per-step positive weights w_t in [0, 1]; step t
// contributes w_t to the positive mass and 1 - w_t to the negative mass.
inline double weighted_roc(const ScoreOrder& order, std::span<const double> weight) {
    double pos_total = 0.0;
    double neg_total = 0.0;
    for (double w : weight) {
        pos_total += w;
        neg_total += 1.0 - w;
    }
    if (!(pos_total > 0.0) || !(neg_total > 0.0)) throw DataError("ROC area undefined without both classes");
    double tp = 0.0;
    double fp = 0.0;
    double area = 0.0;  // sum of dFP * (TP_k + TP_{k-1})
    std::size_t i = 0;
    for (std::size_t end : order.group_end) {
        const double tp_prev = tp;
        const double fp_prev = fp;
        for (; i < end; ++i) {
            tp += weight[order.index[i]];
            fp += 1.0 - weight[order.index[i]];
        }
        area += (fp - fp_prev) * (tp + tp_prev);
    }
    return area / (2.0 * pos_total * neg_total);
}

// Trapezoidal PR area; precision at the +inf threshold (no predictions) is 1.
inline double weighted_pr(const ScoreOrder& order, std::span<const double> weight) {
    double pos_total = 0.0;
    for (double w : weight) pos_total += w;
    if (!(pos_total > 0.0)) throw DataError("PR area undefined without positives");
    double tp = 0.0;
    double predicted = 0.0;
    double prec_prev = 1.0;
    double area = 0.0;  // sum of dTP * (P_k + P_{k-1})
    std::size_t i = 0;
    for (std::size_t end : order.group_end) {
        const double tp_prev = tp;
        for (; i < end; ++i) {
            tp += weight[order.index[i]];
            predicted += 1.0;
        }
        const double prec = tp / predicted;
        area += (tp - tp_prev) * (prec + prec_prev);
        prec_prev = prec;
    }
    return area / (2.0 * pos_total);
}

inline std::vector<double> as_weights(std::span<const std::uint8_t> labels) {
    return std::vector<double>(labels.begin(), labels.end());
}

}  // namespace detail

inline double f1_score(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    detail::check_inputs(scores, labels);
    return detail::weighted_roc(detail::order_scores(scores), detail::as_weights(labels));
}

inline double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    detail::check_inputs(scores, labels);
    return detail::weighted_pr(detail::order_scores(scores), detail::as_weights(labels));
}

// Best point-wise F1 over all thresholds.
inline double point_f1(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    detail::check_inputs(scores, labels);
    const auto order = detail::order_scores(scores);
    double positives = 0.0;
    for (auto y : labels) positives += y;
    double tp = 0.0;
    double predicted = 0.0;
    double best = 0.0;
    std::size_t i = 0;
    for (std::size_t end : order.group_end) {
        for (; i < end; ++i) {
            tp += labels[order.index[i]];
            predicted += 1.0;
        }
        best = std::max(best, f1_score(tp / predicted, tp / positives));
    }
    return best;
}

// Maximal runs of label 1 as [first, last] index pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> anomaly_segments(std::span<const std::uint8_t> labels) {
    std::vector<std::pair<std::size_t, std::size_t>> segs;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (!labels[t]) continue;
        if (t > 0 && labels[t - 1]) {
            segs.back().second = t;
        } else {
            segs.emplace_back(t, t);
        }
    }
    return segs;
}

// Best segment-wise F1 over all thresholds. Range-P is the fraction of
// predicted segments touching a ground-truth segment (0 with no predicted
// segment); Range-R the fraction of ground-truth segments touched.
inline double range_f1(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    const auto segs = anomaly_segments(labels);
    if (segs.empty()) throw DataError("range_f1 needs at least one ground-truth anomaly segment");
    for (double s : scores) {
        if (!std::isfinite(s)) throw DataError("scores must be finite");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> gt_id(n, 0);
    for (std::size_t g = 0; g < segs.size(); ++g) {
        for (std::size_t t = segs[g].first; t <= segs[g].second; ++t) gt_id[t] = g;
    }
    const auto order = detail::order_scores(scores);

    // Predicted segments are grown one point at a time; each segment's extent
    // and "touches ground truth" flag live at its two endpoints.
    std::vector<char> on(n, 0);
    std::vector<std::size_t> seg_end(n, 0);
    std::vector<std::size_t> seg_start(n, 0);
    std::vector<char> seg_hit(n, 0);
    std::vector<char> gt_hit(segs.size(), 0);
    std::size_t n_pred = 0;
    std::size_t n_pred_hit = 0;
    std::size_t n_gt_hit = 0;
    double best = 0.0;
    std::size_t i = 0;
    for (std::size_t end : order.group_end) {
        for (; i < end; ++i) {
            const std::size_t t = order.index[i];
            const bool left = t > 0 && on[t - 1];
            const bool right = t + 1 < n && on[t + 1];
            const std::size_t a = left ? seg_start[t - 1] : t;
            const std::size_t b = right ? seg_end[t + 1] : t;
            const bool hit_left = left && seg_hit[t - 1];
            const bool hit_right = right && seg_hit[t + 1];
            const bool hit = hit_left || hit_right || labels[t] == 1;
            on[t] = 1;
            n_pred = n_pred + 1 - static_cast<std::size_t>(left) - static_cast<std::size_t>(right);
            n_pred_hit = n_pred_hit + static_cast<std::size_t>(hit) - static_cast<std::size_t>(hit_left) -
                         static_cast<std::size_t>(hit_right);
            seg_end[a] = b;
            seg_start[b] = a;
            seg_hit[a] = seg_hit[b] = hit;
            if (labels[t] == 1 && !gt_hit[gt_id[t]]) {
                gt_hit[gt_id[t]] = 1;
                ++n_gt_hit;
            }
        }
        const double precision = n_pred > 0 ? static_cast<double>(n_pred_hit) / static_cast<double>(n_pred) : 0.0;
        const double recall = static_cast<double>(n_gt_hit) / static_cast<double>(segs.size());
        best = std::max(best, f1_score(precision, recall));
    }
    return best;
}

inline constexpr std::size_t kMaxAcfLag = 1000;
inline constexpr std::size_t kDefaultLag = 100;
inline constexpr double kAcfMinPeak = 0.3;
inline constexpr double kAcfMinProminence = 0.01;

// Sample autocorrelation r(0..max_lag) with the biased (1/N) estimator.
// Empty when the series has zero variance.
inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double denom = 0.0;
    for (double v : x) denom += (v - mean) * (v - mean);
    if (!(denom > 1e-12 * static_cast<double>(n))) return {};
    std::vector<double> r(max_lag + 1, 0.0);
    for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) s += (x[t] - mean) * (x[t + k] - mean);
        r[k] = s / denom;
    }
    return r;
}

// First prominent autocorrelation peak: the smallest lag k >= 2 that is a
// strict local maximum with r(k) >= 0.3 and a topographic prominence of at
// least 0.01 (peak minus the higher of the two surrounding minima, each taken
// up to the next higher value or the end of the lag range). Falls back to
// min(100, floor(N/4)).
inline std::size_t estimate_lag(std::span<const double> first_channel) {
    const std::size_t n = first_channel.size();
    if (n < 8) throw DataError("lag estimation needs at least 8 observations");
    const std::size_t max_lag = std::min(n / 4, kMaxAcfLag);
    const std::size_t fallback = std::min(kDefaultLag, n / 4);
    const auto r = autocorrelation(first_channel, max_lag);
    if (r.empty()) return fallback;
    for (std::size_t k = 2; k + 1 <= max_lag; ++k) {
        if (!(r[k] > r[k - 1] && r[k] > r[k + 1]) || r[k] < kAcfMinPeak) continue;
        double left_base = r[k];
        for (std::size_t j = k; j-- > 0;) {
            if (r[j] > r[k]) break;
            left_base = std::min(left_base, r[j]);
        }
        double right_base = r[k];
        for (std::size_t j = k + 1; j <= max_lag; ++j) {
            if (r[j] > r[k]) break;
            right_base = std::min(right_base, r[j]);
        }
        if (r[k] - std::max(left_base, right_base) >= kAcfMinProminence) return k;
    }
    return fallback;
}

// Soft labels for lag tolerance ell: 1 inside anomalies, 1 - d / (ell + 1) at
// distance d in 1..ell from the nearest anomalous step, 0 beyond.
inline std::vector<double> buffered_labels(std::span<const std::uint8_t> labels, std::size_t ell) {
    const std::size_t n = labels.size();
    constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max() / 2;
    std::vector<std::size_t> dist(n, kFar);
    std::size_t last = kFar;
    for (std::size_t t = 0; t < n; ++t) {
        if (labels[t]) last = t;
        if (last != kFar) dist[t] = t - last;
    }
    last = kFar;
    for (std::size_t t = n; t-- > 0;) {
        if (labels[t]) last = t;
        if (last != kFar) dist[t] = std::min(dist[t], last - t);
    }
    std::vector<double> w(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        if (dist[t] == 0) {
            w[t] = 1.0;
        } else if (dist[t] <= ell) {
            w[t] = 1.0 - static_cast<double>(dist[t]) / static_cast<double>(ell + 1);
        }
    }
    return w;
}

inline double vus_roc(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t lag) {
    detail::check_inputs(scores, labels);
    const auto order = detail::order_scores(scores);
    double sum = 0.0;
    for (std::size_t ell = 0; ell <= lag; ++ell) sum += detail::weighted_roc(order, buffered_labels(labels, ell));
    return sum / static_cast<double>(lag + 1);
}

inline double vus_pr(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t lag) {
    detail::check_inputs(scores, labels);
    const auto order = detail::order_scores(scores);
    double sum = 0.0;
    for (std::size_t ell = 0; ell <= lag; ++ell) sum += detail::weighted_pr(order, buffered_labels(labels, ell));
    return sum / static_cast<double>(lag + 1);
}

inline MetricReport evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t lag) {
    detail::check_inputs(scores, labels);
    MetricReport r;
    r.lag = lag;
    r.vus_pr = vus_pr(scores, labels, lag);
    r.vus_roc = vus_roc(scores, labels, lag);
    r.range_f1 = range_f1(scores, labels);
    r.auc_pr = auc_pr(scores, labels);
    r.auc_roc = auc_roc(scores, labels);
    r.point_f1 = point_f1(scores, labels);
    return r;
}

}  // namespace paano
