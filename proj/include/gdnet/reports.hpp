#pragma once

// CSV emitters for every artifact file. Formatting is pinned (%.9g) so that
// reruns with identical inputs are byte-identical.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gdnet/analysis.hpp"
#include "gdnet/metrics.hpp"
#include "gdnet/network.hpp"

namespace gdnet {

namespace detail {

inline std::ofstream open_csv(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open output file: " + path);
    return os;
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

inline void write_loss_csv(const std::vector<double>& trace, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        os << (i + 1) << "," << detail::fmt(trace[i]) << "\n";
}

inline void write_metrics_csv(const MetricsReport& r, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "accuracy,precision,sensitivity,auc,tp,fp,tn,fn\n";
    os << detail::fmt(r.accuracy) << "," << detail::fmt(r.precision) << ","
       << detail::fmt(r.sensitivity) << "," << detail::fmt(r.auc) << "," << r.tp << "," << r.fp
       << "," << r.tn << "," << r.fn << "\n";
}

/// Per-fold rows plus a trailing "pooled" row.
inline void write_fold_metrics_csv(const std::vector<MetricsReport>& per_fold,
                                   const MetricsReport& pooled, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "fold,accuracy,precision,sensitivity,auc\n";
    for (std::size_t f = 0; f < per_fold.size(); ++f)
        os << (f + 1) << "," << detail::fmt(per_fold[f].accuracy) << ","
           << detail::fmt(per_fold[f].precision) << "," << detail::fmt(per_fold[f].sensitivity)
           << "," << detail::fmt(per_fold[f].auc) << "\n";
    os << "pooled," << detail::fmt(pooled.accuracy) << "," << detail::fmt(pooled.precision) << ","
       << detail::fmt(pooled.sensitivity) << "," << detail::fmt(pooled.auc) << "\n";
}

template <typename Real>
void write_alpha_csv(const std::vector<AlphaRecord<Real>>& records, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "sample,layer,alpha,area\n";
    for (const auto& r : records)
        os << r.sample_id << "," << r.layer << "," << detail::fmt(static_cast<double>(r.alpha))
           << "," << detail::fmt(static_cast<double>(r.area)) << "\n";
}

inline void write_correlation_csv(const CorrelationReport& report, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "layer,r\n";
    for (int l = 0; l < 5; ++l)
        os << (l + 1) << "," << detail::fmt(report.per_layer[static_cast<std::size_t>(l)]) << "\n";
}

inline void write_roc_csv(const std::vector<std::pair<double, double>>& points,
                          const std::string& path) {
    auto os = detail::open_csv(path);
    os << "fpr,tpr\n";
    for (const auto& [fpr, tpr] : points)
        os << detail::fmt(fpr) << "," << detail::fmt(tpr) << "\n";
}

inline void write_buckets_csv(const std::vector<BucketAccuracy>& buckets,
                              const std::string& path) {
    auto os = detail::open_csv(path);
    os << "bucket,n,accuracy\n";
    for (const auto& b : buckets)
        os << b.name << "," << b.count << "," << detail::fmt(b.accuracy) << "\n";
}

template <typename Real>
void write_zscore_csv(const ZScoreStats<Real>& stats, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "mean,std\n";
    os << detail::fmt(static_cast<double>(stats.mean)) << ","
       << detail::fmt(static_cast<double>(stats.stdev)) << "\n";
}

template <typename Real>
ZScoreStats<Real> read_zscore_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open stats file: " + path);
    std::string header, row;
    if (!std::getline(is, header) || !std::getline(is, row))
        throw truncated_file_error("stats file truncated");
    double mean = 0, stdev = 0;
    if (std::sscanf(row.c_str(), "%lf,%lf", &mean, &stdev) != 2)
        throw io_error("stats file malformed");
    return {static_cast<Real>(mean), static_cast<Real>(stdev)};
}

}  // namespace gdnet
