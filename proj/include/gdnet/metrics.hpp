#pragma once

// Classification metrics: confusion counts at a fixed threshold, empirical
// (rank-based) AUC with tie handling, and the ROC point list.

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gdnet {

struct MetricsReport {
    double accuracy = 0, precision = 0, sensitivity = 0, auc = 0;
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

namespace detail {

inline void check_scored(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("scores and labels length mismatch");
    for (int y : labels)
        if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
}

}  // namespace detail

/// P(score_pos > score_neg) + 0.5 P(tie), computed from average ranks.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    detail::check_scored(scores, labels);
    const std::size_t n = scores.size();
    long n_pos = 0;
    for (int y : labels) n_pos += y;
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: need at least one sample of each class");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks within tie groups; sum ranks of positives
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]]) pos_rank_sum += avg_rank;
        i = j;
    }
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Confusion counts at the threshold; a sample is called positive only when
/// its score strictly exceeds the threshold (ties go to benign).
inline MetricsReport evaluate_metrics(const std::vector<double>& scores,
                                      const std::vector<int>& labels, double threshold = 0.5) {
    detail::check_scored(scores, labels);
    MetricsReport r;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > threshold;
        if (predicted && labels[i])
            ++r.tp;
        else if (predicted && !labels[i])
            ++r.fp;
        else if (!predicted && !labels[i])
            ++r.tn;
        else
            ++r.fn;
    }
    const long total = r.tp + r.fp + r.tn + r.fn;
    r.accuracy = total ? static_cast<double>(r.tp + r.tn) / total : 0.0;
    r.precision = (r.tp + r.fp) ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
    r.sensitivity = (r.tp + r.fn) ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
    r.auc = roc_auc(scores, labels);
    return r;
}

/// ROC curve points (FPR, TPR), one per distinct threshold, with (0,0) and
/// (1,1) endpoints; trapezoidal area over these points equals roc_auc.
inline std::vector<std::pair<double, double>> roc_points(const std::vector<double>& scores,
                                                         const std::vector<int>& labels) {
    detail::check_scored(scores, labels);
    const std::size_t n = scores.size();
    long n_pos = 0;
    for (int y : labels) n_pos += y;
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_points: need at least one sample of each class");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<std::pair<double, double>> points;
    points.emplace_back(0.0, 0.0);
    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t < j; ++t)
            labels[order[t]] ? ++tp : ++fp;
        points.emplace_back(static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos);
        i = j;
    }
    return points;
}

inline double trapezoid_area(const std::vector<std::pair<double, double>>& points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += (points[i].first - points[i - 1].first) *
                (points[i].second + points[i - 1].second) / 2.0;
    return area;
}

}  // namespace gdnet
