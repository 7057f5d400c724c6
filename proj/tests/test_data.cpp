#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "gdnet/data.hpp"
#include "oracles.hpp"

using namespace gdnet;

TEST_CASE("dataset generation is deterministic and label-balanced") {
    SyntheticSpec spec;
    spec.n_samples = 2000;
    auto a = generate_dataset<float>(spec);
    auto b = generate_dataset<float>(spec);
    REQUIRE(a.size() == 2000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image.data == b[i].image.data);
        CHECK(a[i].label == b[i].label);
        CHECK(a[i].diameter_px == b[i].diameter_px);
    }
    long benign = 0;
    for (const auto& s : a) benign += s.label == 0;
    const double frac = static_cast<double>(benign) / 2000.0;
    CHECK(frac > 0.47);
    CHECK(frac < 0.57);

    spec.seed = 2;
    auto c = generate_dataset<float>(spec);
    CHECK(a[0].image.data != c[0].image.data);

    SyntheticSpec bad;
    bad.n_samples = 5;
    CHECK_THROWS_AS(generate_dataset<float>(bad), std::invalid_argument);
    bad = SyntheticSpec{};
    bad.malignant_max = 30.0;
    CHECK_THROWS_AS(generate_dataset<float>(bad), std::invalid_argument);
}

TEST_CASE("diameter bands and boundary cue separate the classes by size tail") {
    SyntheticSpec spec;
    spec.n_samples = 2000;
    auto data = generate_dataset<float>(spec);
    long malignant_over_12 = 0, malignant = 0;
    for (const auto& s : data) {
        if (s.label == 0) {
            CHECK(s.diameter_px >= 3.0f);
            CHECK(s.diameter_px <= 12.0f);
        } else {
            ++malignant;
            CHECK(s.diameter_px >= 5.0f);
            CHECK(s.diameter_px <= 25.0f);
            if (s.diameter_px > 12.0f) ++malignant_over_12;
        }
    }
    // above 12 px the benign histogram is empty while the malignant one is
    // well populated, so the distributions separate completely there
    CHECK(malignant_over_12 > malignant / 3);
}

TEST_CASE("rendered blob geometry follows the requested diameter") {
    for (double d : {6.0, 8.0, 10.0}) {
        auto s = render_sample<float>(0, d, 0.0, 77);
        // soft logistic edge widens the support slightly past the diameter
        CHECK(s.bbox_w >= static_cast<int>(d) - 1);
        CHECK(s.bbox_w <= static_cast<int>(d) + 3);
        CHECK(s.bbox_h >= static_cast<int>(d) - 1);
        CHECK(s.bbox_h <= static_cast<int>(d) + 3);
        CHECK(std::abs(s.bbox_w - s.bbox_h) <= 1);  // benign blobs are round
    }
    auto s = render_sample<float>(0, 10.0, 0.0, 78);
    const float area = object_area(s);
    CHECK(area >= 81.0f);
    CHECK(area <= 144.0f);
    // interior bright, far background dark on the clean image
    float max_v = *std::max_element(s.image.data.begin(), s.image.data.end());
    CHECK(max_v > 0.9f);
    CHECK(s.image.at(0, 0, 0, 0) < 0.05f);
}

TEST_CASE("malignant boundaries are irregular at matched diameter") {
    double benign_ratio_dev = 0.0, malignant_ratio_dev = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto b = render_sample<float>(0, 10.0, 0.0, 100 + seed);
        auto m = render_sample<float>(1, 10.0, 0.0, 200 + seed);
        benign_ratio_dev += std::abs(b.bbox_w - b.bbox_h);
        malignant_ratio_dev += std::abs(static_cast<double>(object_area(m)) -
                                        static_cast<double>(object_area(b)));
    }
    CHECK(benign_ratio_dev <= 20.0);          // near-round on average
    CHECK(malignant_ratio_dev / 20.0 > 5.0);  // perturbation changes the support
}

TEST_CASE("rotation is an exact index permutation") {
    std::mt19937_64 rng(1);
    auto img = oracle::random_tensor<float>({1, 32, 32}, rng);
    auto r1 = rotate90(img);
    auto r4 = rotate90(rotate90(rotate90(r1)));
    CHECK(r4.data == img.data);

    // a single hot pixel moves to the expected place (CCW)
    Tensor<float> hot({1, 4, 4});
    hot.data[0 * 4 + 1] = 1.0f;  // (row 0, col 1)
    auto rot = rotate90(hot);
    CHECK(rot.data[(4 - 1 - 1) * 4 + 0] == 1.0f);  // -> (row 2, col 0)
    CHECK(std::count(rot.data.begin(), rot.data.end(), 1.0f) == 1);

    auto views = rotate_views(img);
    CHECK(views[0].data == img.data);
    CHECK(views[1].data == rotate90(img).data);
    CHECK(views[3].data == rotate90(views[2]).data);

    CHECK_THROWS_AS(rotate90(Tensor<float>({1, 4, 5})), std::invalid_argument);
}

TEST_CASE("gaussian blur conserves constants and total mass, matches the 2-D oracle") {
    Tensor<float> flat({1, 16, 16}, 3.5f);
    auto blurred = gaussian_blur(flat, 1.0);
    for (float v : blurred.data) CHECK(v == doctest::Approx(3.5f).epsilon(1e-6));

    std::mt19937_64 rng(2);
    auto img = oracle::random_tensor<float>({2, 16, 16}, rng);
    auto out = gaussian_blur(img, 1.0);
    double sum_in = 0.0, sum_out = 0.0;
    for (float v : img.data) sum_in += v;
    for (float v : out.data) sum_out += v;
    CHECK(std::abs(sum_out - sum_in) < 0.005 * std::abs(sum_in) + 0.05);

    auto ref = oracle::blur_reference(img, 1.0);
    for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(std::abs(out.data[i] - ref.data[i]) < 1e-5f);

    CHECK_THROWS_AS(gaussian_blur(img, 0.0), std::invalid_argument);
}

TEST_CASE("augmentation yields five labeled views per sample") {
    auto s = render_sample<float>(1, 9.0, 0.1, 7);
    auto views = augment_sample(s);
    REQUIRE(views.size() == 5);
    for (const auto& v : views) CHECK(v.label == 1);
    CHECK(views[0].image.data == s.image.data);
    CHECK(views[1].image.data == rotate90(s.image).data);
    CHECK(views[4].image.data == gaussian_blur(s.image, 1.0).data);

    std::vector<Sample<float>> samples = {s, render_sample<float>(0, 6.0, 0.1, 8)};
    auto all = augment_dataset(samples);
    CHECK(all.size() == 10);
    CHECK(all[5].label == 0);
}

TEST_CASE("z-score statistics and transform") {
    std::mt19937_64 rng(3);
    std::vector<Tensor<float>> imgs;
    for (int i = 0; i < 8; ++i) imgs.push_back(oracle::random_tensor<float>({1, 16, 16}, rng, 2.0));
    auto stats = zscore_fit(imgs);
    zscore_apply(imgs, stats);
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& img : imgs)
        for (float v : img.data) {
            sum += v;
            sq += static_cast<double>(v) * v;
            ++n;
        }
    CHECK(std::abs(sum / static_cast<double>(n)) < 1e-4);
    CHECK(sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-3));

    CHECK_THROWS_AS(zscore_fit(std::vector<Tensor<float>>{}), std::invalid_argument);
    std::vector<Tensor<float>> constant(3, Tensor<float>({1, 4, 4}, 2.0f));
    CHECK_THROWS_AS(zscore_fit(constant), std::invalid_argument);

    // the fit-and-apply convenience uses training statistics for both sets
    std::vector<Tensor<float>> tr = {oracle::random_tensor<float>({1, 4, 4}, rng)};
    std::vector<Tensor<float>> te = {oracle::random_tensor<float>({1, 4, 4}, rng)};
    auto te_orig = te[0];
    auto st = zscore_fit_apply(tr, te);
    for (std::size_t i = 0; i < te_orig.size(); ++i)
        CHECK(te[0].data[i] ==
              doctest::Approx((te_orig.data[i] - st.mean) / st.stdev).epsilon(1e-6));
}

TEST_CASE("stratified folds are disjoint, exhaustive and class-balanced") {
    // 848 samples, 406 benign / 442 malignant
    std::vector<Sample<float>> samples(848);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].label = i < 406 ? 0 : 1;
    auto split = stratified_kfold(samples, 10, 1);
    REQUIRE(split.folds.size() == 10);
    std::set<int> seen;
    for (const auto& fold : split.folds) {
        CHECK(fold.size() >= 84);
        CHECK(fold.size() <= 85);
        long benign = 0;
        for (int idx : fold) {
            CHECK(seen.insert(idx).second);  // disjoint
            benign += samples[static_cast<std::size_t>(idx)].label == 0;
        }
        // global benign count / k = 40.6; every fold within +-2 samples
        CHECK(benign >= 39);
        CHECK(benign <= 43);
    }
    CHECK(seen.size() == 848);  // exhaustive

    // identical seed -> identical split; different seed -> different split
    auto split2 = stratified_kfold(samples, 10, 1);
    CHECK(split.folds == split2.folds);
    auto split3 = stratified_kfold(samples, 10, 2);
    CHECK(split.folds != split3.folds);

    // minimum viable case: 10 + 10 samples, k = 10 -> 2 per fold, one of each
    std::vector<Sample<float>> tiny(20);
    for (std::size_t i = 0; i < 20; ++i) tiny[i].label = i < 10 ? 0 : 1;
    auto ts = stratified_kfold(tiny, 10, 3);
    for (const auto& fold : ts.folds) {
        REQUIRE(fold.size() == 2);
        CHECK(tiny[static_cast<std::size_t>(fold[0])].label +
                  tiny[static_cast<std::size_t>(fold[1])].label ==
              1);
    }

    CHECK_THROWS_AS(stratified_kfold(tiny, 11, 1), std::invalid_argument);
    CHECK_THROWS_AS(stratified_kfold(tiny, 1, 1), std::invalid_argument);
}

TEST_CASE("dataset files round-trip exactly") {
    SyntheticSpec spec;
    spec.n_samples = 12;
    auto samples = generate_dataset<float>(spec);
    const char* path = "test_dataset.bin";
    write_dataset(samples, path);
    auto loaded = read_dataset<float>(path);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].label == samples[i].label);
        CHECK(loaded[i].diameter_px == samples[i].diameter_px);
        CHECK(loaded[i].bbox_w == samples[i].bbox_w);
        CHECK(loaded[i].bbox_h == samples[i].bbox_h);
        CHECK(loaded[i].image.data == samples[i].image.data);
    }

    // truncation and bad labels are rejected
    {
        std::ifstream is(path, std::ios::binary);
        std::string bytes(std::istreambuf_iterator<char>(is), {});
        std::ofstream os(path, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(read_dataset<float>(path), truncated_file_error);
    CHECK_THROWS_AS(read_dataset<float>("no_such_dataset.bin"), io_error);
    std::remove(path);

    const char* manifest = "test_manifest.csv";
    write_manifest(samples, manifest);
    std::ifstream is(manifest);
    std::string line;
    std::getline(is, line);
    CHECK(line == "id,label,diameter,bbox_w,bbox_h");
    long rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 12);
    std::remove(manifest);
}
