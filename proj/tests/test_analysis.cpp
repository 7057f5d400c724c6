#include <doctest.h>

#include <random>

#include "gdnet/analysis.hpp"
#include "gdnet/metrics.hpp"
#include "gdnet/train.hpp"
#include "oracles.hpp"

using namespace gdnet;

TEST_CASE("pearson correlation fixtures") {
    CHECK(pearson<double>({1, 2, 3, 4}, {2, 1, 4, 3}) == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(pearson<double>({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson<double>({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));

    // affine invariance and sign flip
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<double> x, y, y_scaled, y_neg;
    for (int i = 0; i < 100; ++i) {
        x.push_back(u(rng));
        y.push_back(u(rng));
        y_scaled.push_back(2.5 * y.back() + 7.0);
        y_neg.push_back(-y.back());
    }
    const double r = pearson(x, y);
    CHECK(pearson(x, y_scaled) == doctest::Approx(r).epsilon(1e-12));
    CHECK(pearson(x, y_neg) == doctest::Approx(-r).epsilon(1e-12));

    CHECK_THROWS_AS(pearson<double>({1, 2, 3}, {2, 2, 2}), std::invalid_argument);
    CHECK_THROWS_AS(pearson<double>({1}, {2}), std::invalid_argument);
    CHECK_THROWS_AS(pearson<double>({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("correlation report recovers a rigged perfect relationship") {
    std::vector<AlphaRecord<float>> records;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(10.0f, 400.0f);
    for (int i = 0; i < 30; ++i) {
        const float area = u(rng);
        for (int l = 1; l <= 5; ++l)
            // alpha strictly decreasing in area for every layer
            records.push_back({i, l, 1.0f - area / 500.0f, area});
    }
    auto report = correlation_report(records);
    CHECK(report.sample_count == 30);
    for (double r : report.per_layer) CHECK(r == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("size-bucket accuracy with boundary diameters") {
    std::vector<Sample<float>> samples(6);
    const double diameters[] = {4.9, 3.0, 5.0, 12.9, 13.0, 25.0};
    const int labels[] = {0, 0, 1, 1, 1, 1};
    for (int i = 0; i < 6; ++i) {
        samples[static_cast<std::size_t>(i)].diameter_px = static_cast<float>(diameters[i]);
        samples[static_cast<std::size_t>(i)].label = labels[i];
    }
    // correct on all but the sample with diameter 12.9
    const std::vector<double> scores = {0.1, 0.2, 0.9, 0.3, 0.8, 0.95};
    auto buckets = accuracy_by_size(scores, samples);
    REQUIRE(buckets.size() == 3);
    CHECK(buckets[0].name == "small");   // 4.9 and 3.0
    CHECK(buckets[0].count == 2);
    CHECK(buckets[0].accuracy == doctest::Approx(1.0));
    CHECK(buckets[1].name == "medium");  // 5.0 and 12.9
    CHECK(buckets[1].count == 2);
    CHECK(buckets[1].accuracy == doctest::Approx(0.5));
    CHECK(buckets[2].name == "large");   // 13.0 and 25.0 (closed upper end)
    CHECK(buckets[2].count == 2);
    CHECK(buckets[2].accuracy == doctest::Approx(1.0));

    // an empty bucket is omitted, not reported as zero
    std::vector<Sample<float>> only_small(2);
    only_small[0].diameter_px = 3.5f;
    only_small[1].diameter_px = 4.0f;
    auto few = accuracy_by_size({0.1, 0.2}, only_small);
    REQUIRE(few.size() == 1);
    CHECK(few[0].name == "small");

    CHECK_THROWS_AS(accuracy_by_size({0.1}, samples), std::invalid_argument);
}

TEST_CASE("ROC points are monotone with pinned endpoints, area equals AUC") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < 30; ++i) {
            scores.push_back(std::round(u(rng) * 10.0) / 10.0);
            labels.push_back(static_cast<int>(rng() & 1));
        }
        labels[0] = 0;
        labels[1] = 1;
        auto points = roc_points(scores, labels);
        CHECK(points.front() == std::pair<double, double>(0.0, 0.0));
        CHECK(points.back() == std::pair<double, double>(1.0, 1.0));
        for (std::size_t i = 1; i < points.size(); ++i) {
            CHECK(points[i].first >= points[i - 1].first);
            CHECK(points[i].second >= points[i - 1].second);
        }
        CHECK(trapezoid_area(points) == doctest::Approx(roc_auc(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("alpha recording is complete, deterministic and side-effect free") {
    GDNetConfig config;
    auto params = init_network<float>(config, 5);
    SyntheticSpec spec;
    spec.n_samples = 10;
    spec.seed = 4;
    auto samples = generate_dataset<float>(spec);
    std::vector<Tensor<float>> pixels;
    for (const auto& s : samples) pixels.push_back(s.image);
    auto stats = zscore_fit(pixels);

    std::string before;
    for (auto* t : param_list(params))
        before.append(reinterpret_cast<const char*>(t->data.data()), t->size() * sizeof(float));

    auto records = record_alphas(params, samples, stats, config);
    REQUIRE(records.size() == 50);
    for (int i = 0; i < 10; ++i)
        for (int l = 0; l < 5; ++l) {
            const auto& r = records[static_cast<std::size_t>(i * 5 + l)];
            CHECK(r.sample_id == i);
            CHECK(r.layer == l + 1);
            CHECK(r.alpha > 0.0f);
            CHECK(r.alpha < 1.0f);
            CHECK(r.area == object_area(samples[static_cast<std::size_t>(i)]));
        }

    auto again = record_alphas(params, samples, stats, config);
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].alpha == again[i].alpha);

    std::string after;
    for (auto* t : param_list(params))
        after.append(reinterpret_cast<const char*>(t->data.data()), t->size() * sizeof(float));
    CHECK(before == after);  // probing never touches the parameters

    samples[0].bbox_w = 0;
    CHECK_THROWS_AS(record_alphas(params, samples, stats, config), std::invalid_argument);
}
