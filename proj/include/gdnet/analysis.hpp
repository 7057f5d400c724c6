#pragma once

// Attention-signal probing: record the per-layer alpha for each sample,
// correlate it with object area, and break accuracy down by object size.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdnet/data.hpp"
#include "gdnet/network.hpp"

namespace gdnet {

template <typename Real>
struct AlphaRecord {
    int sample_id;
    int layer;  // 1..5
    Real alpha;
    Real area;
};

/// Forwards each clean sample once (dropout off) and records the five
/// attention scalars together with the bbox area. Parameters are not
/// touched.
template <typename Real>
std::vector<AlphaRecord<Real>> record_alphas(GDNetParams<Real>& params,
                                             const std::vector<Sample<Real>>& samples,
                                             const ZScoreStats<Real>& stats,
                                             const GDNetConfig& config = {}) {
    std::vector<AlphaRecord<Real>> records;
    records.reserve(samples.size() * 5);
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        if (s.bbox_w <= 0 || s.bbox_h <= 0)
            throw std::invalid_argument("record_alphas: sample " + std::to_string(i) +
                                        " has no bounding box");
        Tensor<Real> img = zscore_apply(s.image, stats);
        Tensor<Real> batch =
            Tensor<Real>::from({1, img.shape[0], img.shape[1], img.shape[2]}, std::move(img.data));
        auto r = forward(params, batch, config, false);
        for (int l = 0; l < 5; ++l)
            records.push_back({i, l + 1, r.alphas.data[static_cast<std::size_t>(l)],
                               object_area(s)});
    }
    return records;
}

/// Pearson correlation coefficient, 64-bit accumulation.
template <typename Real>
double pearson(const std::vector<Real>& x, const std::vector<Real>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("pearson: need two equal-length series of length >= 2");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += static_cast<double>(x[i]);
        sy += static_cast<double>(y[i]);
    }
    const double mx = sx / n, my = sy / n;
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = static_cast<double>(x[i]) - mx;
        const double dy = static_cast<double>(y[i]) - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if (vx <= 0.0 || vy <= 0.0) throw std::invalid_argument("pearson: zero variance");
    return cov / std::sqrt(vx * vy);
}

struct CorrelationReport {
    std::array<double, 5> per_layer{};
    int sample_count = 0;
};

/// Per-layer Pearson correlation between alpha and object area.
template <typename Real>
CorrelationReport correlation_report(const std::vector<AlphaRecord<Real>>& records) {
    CorrelationReport report;
    for (int l = 1; l <= 5; ++l) {
        std::vector<Real> areas, alphas;
        for (const auto& r : records) {
            if (r.layer != l) continue;
            areas.push_back(r.area);
            alphas.push_back(r.alpha);
        }
        report.per_layer[static_cast<std::size_t>(l - 1)] = pearson(areas, alphas);
        report.sample_count = static_cast<int>(areas.size());
    }
    return report;
}

struct SizeBucket {
    std::string name;
    double lo, hi;  // [lo, hi) except the last bucket which is closed
    bool closed_hi;
};

inline std::vector<SizeBucket> default_size_buckets() {
    return {{"small", 3.0, 5.0, false}, {"medium", 5.0, 13.0, false}, {"large", 13.0, 25.0, true}};
}

struct BucketAccuracy {
    std::string name;
    long count = 0;
    double accuracy = 0.0;
};

/// Accuracy at threshold 0.5 within each diameter bucket. Empty buckets are
/// omitted from the result rather than reported as zero.
template <typename Real>
std::vector<BucketAccuracy> accuracy_by_size(
    const std::vector<double>& scores, const std::vector<Sample<Real>>& samples,
    const std::vector<SizeBucket>& buckets = default_size_buckets(), double threshold = 0.5) {
    if (scores.size() != samples.size())
        throw std::invalid_argument("accuracy_by_size: scores/samples length mismatch");
    std::vector<BucketAccuracy> out;
    for (const auto& bucket : buckets) {
        long count = 0, correct = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const double d = static_cast<double>(samples[i].diameter_px);
            const bool in_bucket =
                d >= bucket.lo && (bucket.closed_hi ? d <= bucket.hi : d < bucket.hi);
            if (!in_bucket) continue;
            ++count;
            const int predicted = scores[i] > threshold ? 1 : 0;
            if (predicted == samples[i].label) ++correct;
        }
        if (count > 0)
            out.push_back({bucket.name, count, static_cast<double>(correct) / count});
    }
    return out;
}

}  // namespace gdnet
