#pragma once

// Synthetic multi-scale dataset: soft-edged blobs on a noisy background,
// benign = smooth disk, malignant = radially perturbed disk. Class-
// conditional diameter distributions overlap over 5-12 px so size alone
// cannot separate the classes; the boundary-irregularity cue can.
// Also the augmentation, normalization and fold-splitting machinery.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gdnet/network.hpp"  // io error types + little-endian helpers
#include "gdnet/tensor.hpp"

namespace gdnet {

inline constexpr int kCanvas = 32;

template <typename Real>
struct Sample {
    Tensor<Real> image;  // 1 x 32 x 32
    int label = 0;       // 0 benign, 1 malignant
    Real diameter_px = 0;
    int bbox_w = 0, bbox_h = 0;
};

struct SyntheticSpec {
    int n_samples = 2000;
    double benign_fraction = 0.52;
    // class-conditional diameter distributions (truncated normals, px)
    double benign_mean = 6.5, benign_sd = 2.0, benign_min = 3.0, benign_max = 12.0;
    double malignant_mean = 14.0, malignant_sd = 3.5, malignant_min = 5.0, malignant_max = 25.0;
    double noise_sigma = 0.1;
    std::uint64_t seed = 1;
};

/// Bounding-box width x height.
template <typename Real>
Real object_area(const Sample<Real>& s) {
    return static_cast<Real>(s.bbox_w) * static_cast<Real>(s.bbox_h);
}

namespace detail {

// blob rendering constants: logistic edge profile and the intensity level
// below which a pixel counts as background
inline constexpr double kEdgeWidth = 0.35;
inline constexpr double kForegroundThreshold = 0.25;
inline constexpr double kBlobIntensity = 1.0;

inline double truncated_normal(std::mt19937_64& rng, double mean, double sd, double lo,
                               double hi) {
    std::normal_distribution<double> n(mean, sd);
    for (;;) {
        double v = n(rng);
        if (v >= lo && v <= hi) return v;
    }
}

}  // namespace detail

/// Renders one blob. Malignant blobs get a low-order radial sinusoidal
/// boundary perturbation; benign blobs are smooth disks. The bbox is
/// measured on the clean (noise-free) image.
template <typename Real>
Sample<Real> render_sample(int label, double diameter, double noise_sigma,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    const double cx = kCanvas / 2.0 - 0.5 + (u(rng) * 6.0 - 3.0);
    const double cy = kCanvas / 2.0 - 0.5 + (u(rng) * 6.0 - 3.0);
    const double radius = diameter / 2.0;

    double amp = 0.0, phase = 0.0;
    int lobes = 0;
    if (label == 1) {
        amp = 0.18 + 0.12 * u(rng);
        lobes = 3 + static_cast<int>(u(rng) * 3.0);  // 3..5
        phase = u(rng) * 6.283185307179586;
    }

    Sample<Real> s;
    s.label = label;
    s.diameter_px = static_cast<Real>(diameter);
    s.image = Tensor<Real>({1, kCanvas, kCanvas});

    int min_r = kCanvas, max_r = -1, min_c = kCanvas, max_c = -1;
    std::vector<double> clean(static_cast<std::size_t>(kCanvas) * kCanvas);
    for (int r = 0; r < kCanvas; ++r) {
        for (int c = 0; c < kCanvas; ++c) {
            const double dy = r - cy, dx = c - cx;
            const double dist = std::sqrt(dx * dx + dy * dy);
            const double theta = std::atan2(dy, dx);
            const double boundary = radius * (1.0 + amp * std::sin(lobes * theta + phase));
            const double v = detail::kBlobIntensity /
                             (1.0 + std::exp((dist - boundary) / detail::kEdgeWidth));
            clean[static_cast<std::size_t>(r) * kCanvas + c] = v;
            if (v > detail::kForegroundThreshold) {
                min_r = std::min(min_r, r);
                max_r = std::max(max_r, r);
                min_c = std::min(min_c, c);
                max_c = std::max(max_c, c);
            }
        }
    }
    s.bbox_w = max_c >= min_c ? max_c - min_c + 1 : 0;
    s.bbox_h = max_r >= min_r ? max_r - min_r + 1 : 0;

    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        double v = clean[i];
        if (noise_sigma > 0.0) v += noise(rng);
        s.image.data[i] = static_cast<Real>(v);
    }
    return s;
}

template <typename Real>
std::vector<Sample<Real>> generate_dataset(const SyntheticSpec& spec) {
    if (spec.n_samples < 10) throw std::invalid_argument("generate_dataset: need >= 10 samples");
    if (spec.benign_min < 3.0 || spec.malignant_max > 25.0 || spec.malignant_max >= kCanvas)
        throw std::invalid_argument("generate_dataset: diameter band outside canvas");
    if (spec.benign_min > spec.benign_max || spec.malignant_min > spec.malignant_max)
        throw std::invalid_argument("generate_dataset: empty diameter band");

    std::vector<Sample<Real>> out;
    out.reserve(static_cast<std::size_t>(spec.n_samples));
    for (int i = 0; i < spec.n_samples; ++i) {
        std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i), 0x5a));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const int label = u(rng) < spec.benign_fraction ? 0 : 1;
        const double diameter =
            label == 0 ? detail::truncated_normal(rng, spec.benign_mean, spec.benign_sd,
                                                  spec.benign_min, spec.benign_max)
                       : detail::truncated_normal(rng, spec.malignant_mean, spec.malignant_sd,
                                                  spec.malignant_min, spec.malignant_max);
        out.push_back(render_sample<Real>(label, diameter, spec.noise_sigma, rng()));
    }
    return out;
}

// --- augmentation -----------------------------------------------------

/// Lossless 90-degree CCW rotation (pure index permutation).
template <typename Real>
Tensor<Real> rotate90(const Tensor<Real>& image) {
    if (image.rank() != 3 || image.extent(1) != image.extent(2))
        throw std::invalid_argument("rotate90: expected square CxHxW image");
    const int c = image.extent(0), n = image.extent(1);
    Tensor<Real> out(image.shape);
    for (int ch = 0; ch < c; ++ch)
        for (int r = 0; r < n; ++r)
            for (int col = 0; col < n; ++col)
                out.data[(static_cast<std::size_t>(ch) * n + (n - 1 - col)) * n + r] =
                    image.data[(static_cast<std::size_t>(ch) * n + r) * n + col];
    return out;
}

/// The four 0/90/180/270-degree views, in that order.
template <typename Real>
std::array<Tensor<Real>, 4> rotate_views(const Tensor<Real>& image) {
    std::array<Tensor<Real>, 4> out{image, rotate90(image), Tensor<Real>{}, Tensor<Real>{}};
    out[2] = rotate90(out[1]);
    out[3] = rotate90(out[2]);
    return out;
}

/// Separable Gaussian blur with a truncated kernel (radius ceil(3*sigma)),
/// normalized to sum 1, symmetric reflection at the borders.
template <typename Real>
Tensor<Real> gaussian_blur(const Tensor<Real>& image, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    if (image.rank() != 3) throw std::invalid_argument("gaussian_blur: expected CxHxW image");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        total += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= total;

    const int c = image.extent(0), h = image.extent(1), w = image.extent(2);
    auto reflect = [](int i, int n) {
        // symmetric reflection: -1 -> 0, n -> n-1
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };

    Tensor<Real> tmp(image.shape), out(image.shape);
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = static_cast<std::size_t>(ch) * h * w;
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           static_cast<double>(image.data[off + static_cast<std::size_t>(r) * w +
                                                          reflect(col + i, w)]);
                tmp.data[off + static_cast<std::size_t>(r) * w + col] = static_cast<Real>(acc);
            }
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           static_cast<double>(
                               tmp.data[off + static_cast<std::size_t>(reflect(r + i, h)) * w + col]);
                out.data[off + static_cast<std::size_t>(r) * w + col] = static_cast<Real>(acc);
            }
    }
    return out;
}

template <typename Real>
struct LabeledImage {
    Tensor<Real> image;
    int label;
};

/// Training expansion of one sample: the four rotations plus a sigma=1 blur
/// of the unrotated image (5 images per sample).
template <typename Real>
std::vector<LabeledImage<Real>> augment_sample(const Sample<Real>& s) {
    std::vector<LabeledImage<Real>> out;
    out.reserve(5);
    for (auto& v : rotate_views(s.image)) out.push_back({std::move(v), s.label});
    out.push_back({gaussian_blur(s.image, 1.0), s.label});
    return out;
}

template <typename Real>
std::vector<LabeledImage<Real>> augment_dataset(const std::vector<Sample<Real>>& samples) {
    std::vector<LabeledImage<Real>> out;
    out.reserve(samples.size() * 5);
    for (const auto& s : samples)
        for (auto& li : augment_sample(s)) out.push_back(std::move(li));
    return out;
}

// --- normalization ----------------------------------------------------

template <typename Real>
struct ZScoreStats {
    Real mean, stdev;
};

/// Statistics over all training pixels only (64-bit accumulation).
template <typename Real>
ZScoreStats<Real> zscore_fit(const std::vector<Tensor<Real>>& train_images) {
    if (train_images.empty()) throw std::invalid_argument("zscore_fit: empty training set");
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (const auto& img : train_images) {
        for (Real v : img.data) {
            sum += static_cast<double>(v);
            sum_sq += static_cast<double>(v) * static_cast<double>(v);
            ++count;
        }
    }
    const double mean = sum / static_cast<double>(count);
    const double var = sum_sq / static_cast<double>(count) - mean * mean;
    if (var <= 0.0) throw std::invalid_argument("zscore_fit: zero variance in training pixels");
    return {static_cast<Real>(mean), static_cast<Real>(std::sqrt(var))};
}

template <typename Real>
void zscore_apply(std::vector<Tensor<Real>>& images, const ZScoreStats<Real>& stats) {
    for (auto& img : images)
        for (auto& v : img.data) v = (v - stats.mean) / stats.stdev;
}

template <typename Real>
Tensor<Real> zscore_apply(const Tensor<Real>& image, const ZScoreStats<Real>& stats) {
    Tensor<Real> out = image;
    for (auto& v : out.data) v = (v - stats.mean) / stats.stdev;
    return out;
}

/// Fits on the training set and transforms both sets with the same stats.
template <typename Real>
ZScoreStats<Real> zscore_fit_apply(std::vector<Tensor<Real>>& train_images,
                                   std::vector<Tensor<Real>>& test_images) {
    auto stats = zscore_fit(train_images);
    zscore_apply(train_images, stats);
    zscore_apply(test_images, stats);
    return stats;
}

// --- fold splitting ---------------------------------------------------

struct FoldSplit {
    std::vector<std::vector<int>> folds;
};

/// Stratified k-fold: per-class shuffled round-robin assignment, with the
/// remainder of each class starting where the previous class's ended so no
/// fold collects all the extras.
template <typename Real>
FoldSplit stratified_kfold(const std::vector<Sample<Real>>& samples, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
    std::array<std::vector<int>, 2> by_class;
    for (int i = 0; i < static_cast<int>(samples.size()); ++i)
        by_class[samples[static_cast<std::size_t>(i)].label].push_back(i);
    for (int cls = 0; cls < 2; ++cls)
        if (static_cast<int>(by_class[cls].size()) < k)
            throw std::invalid_argument("stratified_kfold: class " + std::to_string(cls) +
                                        " has fewer than k members");
    FoldSplit split;
    split.folds.assign(static_cast<std::size_t>(k), {});
    int offset = 0;
    std::mt19937_64 rng(derive_seed(seed, 0xf01d));
    for (int cls = 0; cls < 2; ++cls) {
        auto& idx = by_class[cls];
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int i = 0; i < static_cast<int>(idx.size()); ++i)
            split.folds[static_cast<std::size_t>((offset + i) % k)].push_back(idx[i]);
        offset = (offset + static_cast<int>(idx.size())) % k;
    }
    return split;
}

// --- dataset file: one text header line "count width height", then per
// --- sample: label byte, diameter f32 LE, bbox 2 x u16 LE, pixels f32 LE.

template <typename Real>
void write_dataset(const std::vector<Sample<Real>>& samples, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open dataset file for writing: " + path);
    os << samples.size() << " " << kCanvas << " " << kCanvas << "\n";
    for (const auto& s : samples) {
        os.put(static_cast<char>(s.label));
        detail::put_f32(os, static_cast<float>(s.diameter_px));
        detail::put_u16(os, static_cast<std::uint16_t>(s.bbox_w));
        detail::put_u16(os, static_cast<std::uint16_t>(s.bbox_h));
        for (Real v : s.image.data) detail::put_f32(os, static_cast<float>(v));
    }
    if (!os) throw io_error("failed writing dataset file: " + path);
}

template <typename Real>
std::vector<Sample<Real>> read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open dataset file: " + path);
    std::string header;
    if (!std::getline(is, header)) throw truncated_file_error("dataset file missing header");
    std::istringstream hs(header);
    std::size_t count = 0;
    int w = 0, h = 0;
    if (!(hs >> count >> w >> h) || w != kCanvas || h != kCanvas)
        throw shape_mismatch_error("dataset header malformed or wrong image size");
    std::vector<Sample<Real>> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Sample<Real> s;
        char label;
        if (!detail::get_bytes(is, &label, 1)) throw truncated_file_error("dataset file truncated");
        if (label != 0 && label != 1) throw shape_mismatch_error("dataset label outside {0,1}");
        s.label = label;
        s.diameter_px = static_cast<Real>(detail::get_f32(is));
        s.bbox_w = detail::get_u16(is);
        s.bbox_h = detail::get_u16(is);
        s.image = Tensor<Real>({1, kCanvas, kCanvas});
        for (auto& v : s.image.data) v = static_cast<Real>(detail::get_f32(is));
        out.push_back(std::move(s));
    }
    return out;
}

/// CSV manifest (id,label,diameter,bbox_w,bbox_h) for probing tools.
template <typename Real>
void write_manifest(const std::vector<Sample<Real>>& samples, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open manifest for writing: " + path);
    os << "id,label,diameter,bbox_w,bbox_h\n";
    char buf[128];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        std::snprintf(buf, sizeof(buf), "%zu,%d,%.9g,%d,%d\n", i, s.label,
                      static_cast<double>(s.diameter_px), s.bbox_w, s.bbox_h);
        os << buf;
    }
}

}  // namespace gdnet
