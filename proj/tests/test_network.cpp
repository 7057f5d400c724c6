#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "gdnet/network.hpp"
#include "oracles.hpp"

using namespace gdnet;

namespace {

template <typename Real>
bool params_equal(GDNetParams<Real>& a, GDNetParams<Real>& b) {
    auto na = named_params(a), nb = named_params(b);
    for (std::size_t i = 0; i < na.size(); ++i) {
        if (na[i].first != nb[i].first) return false;
        if (na[i].second->shape != nb[i].second->shape) return false;
        if (na[i].second->data != nb[i].second->data) return false;
    }
    return true;
}

const char* kTmpWeights = "test_weights.gdnw";

}  // namespace

TEST_CASE("channel plan and parameter count") {
    GDNetConfig config;
    CHECK(config.layer_channels() == std::array<int, 5>{32, 32, 64, 64, 64});
    CHECK(config.in_channels_of(0) == 1);
    CHECK(config.in_channels_of(1) == 32);
    CHECK(config.in_channels_of(4) == 64);
    CHECK(config.parameter_count() == 103476);

    auto params = init_network<float>(config, 1);
    long actual = 0;
    for (auto* t : param_list(params)) actual += static_cast<long>(t->size());
    CHECK(actual == config.parameter_count());
    CHECK(named_params(params).size() == 27);
}

TEST_CASE("initialization is deterministic per seed, Xavier-bounded, zero-biased") {
    GDNetConfig config;
    auto a = init_network<float>(config, 42);
    auto b = init_network<float>(config, 42);
    auto c = init_network<float>(config, 43);
    CHECK(params_equal(a, b));
    CHECK(!params_equal(a, c));

    // layer 2 branch kernel: fan_in = 32*9 = 288, fan_out = 16*9 = 144
    const double bound = std::sqrt(6.0 / (288 + 144));
    double max_abs = 0.0, sum = 0.0;
    for (float v : a.layers[1].k1.data) {
        max_abs = std::max(max_abs, std::abs(static_cast<double>(v)));
        sum += static_cast<double>(v);
    }
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.9 * bound);  // the band is actually filled
    CHECK(std::abs(sum / static_cast<double>(a.layers[1].k1.size())) < 0.1 * bound);

    for (int l = 0; l < 5; ++l) CHECK(a.layers[l].subnet.neuron_bias.data[0] == 0.0f);
    CHECK(a.head_bias.data[0] == 0.0f);
}

TEST_CASE("forward pass shape and range contract") {
    GDNetConfig config;
    auto params = init_network<float>(config, 7);
    std::mt19937_64 rng(3);
    auto batch = oracle::random_tensor<float>({3, 1, 32, 32}, rng);
    auto result = forward(params, batch, config);
    CHECK(result.probabilities.size() == 3);
    for (float p : result.probabilities) {
        CHECK(p > 0.0f);
        CHECK(p < 1.0f);
    }
    CHECK(result.alphas.shape == std::vector<int>{3, 5});
    for (float a : result.alphas.data) {
        CHECK(a > 0.0f);
        CHECK(a < 1.0f);
    }
    CHECK_THROWS_AS(forward(params, Tensor<float>({3, 1, 16, 16}), config), std::invalid_argument);
    CHECK_THROWS_AS(forward(params, Tensor<float>({3, 2, 32, 32}), config), std::invalid_argument);
}

TEST_CASE("per-layer activations match the channel plan") {
    GDNetConfig config;
    auto params = init_network<float>(config, 9);
    Tape<float> tape;
    auto net = register_network(tape, params, false);
    std::mt19937_64 rng(4);
    auto x = tape.input(oracle::random_tensor<float>({2, 1, 32, 32}, rng));
    auto cur = x;
    const auto plan = config.layer_channels();
    for (int l = 0; l < 5; ++l) {
        auto res = gd_forward(tape, cur, net.layers[l]);
        cur = res.features;
        CHECK(tape.value(cur).shape == std::vector<int>{2, plan[static_cast<std::size_t>(l)], 32, 32});
    }
}

TEST_CASE("training-mode dropout is seed-deterministic") {
    GDNetConfig config;
    auto params = init_network<float>(config, 11);
    std::mt19937_64 rng(5);
    auto batch = oracle::random_tensor<float>({2, 1, 32, 32}, rng);
    auto a = forward(params, batch, config, true, 123);
    auto b = forward(params, batch, config, true, 123);
    auto c = forward(params, batch, config, true, 124);
    CHECK(a.probabilities == b.probabilities);
    CHECK(a.probabilities != c.probabilities);
}

TEST_CASE("view averaging is the mean of the single-view outputs") {
    GDNetConfig config;
    auto params = init_network<float>(config, 13);
    std::mt19937_64 rng(6);
    auto v1 = oracle::random_tensor<float>({1, 1, 32, 32}, rng);
    auto v2 = oracle::random_tensor<float>({1, 1, 32, 32}, rng);
    const double p1 = forward(params, v1, config).probabilities[0];
    const double p2 = forward(params, v2, config).probabilities[0];
    CHECK(predict_views(params, {v1, v2}, config) == doctest::Approx((p1 + p2) / 2).epsilon(1e-6));
    CHECK(predict_views(params, {v1, v1}, config) == doctest::Approx(p1).epsilon(1e-6));
    CHECK_THROWS_AS(predict_views(params, std::vector<Tensor<float>>{}, config),
                    std::invalid_argument);
}

TEST_CASE("weight files round-trip bitwise and reject corruption distinctly") {
    GDNetConfig config;
    auto params = init_network<float>(config, 21);
    save_weights(params, kTmpWeights);
    auto loaded = load_weights<float>(kTmpWeights, config);
    CHECK(params_equal(params, loaded));

    // forward after the round trip is bitwise identical
    std::mt19937_64 rng(7);
    auto batch = oracle::random_tensor<float>({2, 1, 32, 32}, rng);
    auto before = forward(params, batch, config);
    auto after = forward(loaded, batch, config);
    CHECK(before.probabilities == after.probabilities);
    CHECK(before.alphas.data == after.alphas.data);

    auto slurp = [] {
        std::ifstream is(kTmpWeights, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), {});
    };
    auto dump = [](const std::string& bytes) {
        std::ofstream os(kTmpWeights, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    const std::string good = slurp();

    std::string bad = good;
    bad[0] = 'X';
    dump(bad);
    CHECK_THROWS_AS(load_weights<float>(kTmpWeights, config), bad_magic_error);

    bad = good;
    bad[4] = 99;  // version field
    dump(bad);
    CHECK_THROWS_AS(load_weights<float>(kTmpWeights, config), bad_version_error);

    dump(good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_weights<float>(kTmpWeights, config), truncated_file_error);

    bad = good;
    bad[14] = 'X';  // first tensor name
    dump(bad);
    CHECK_THROWS_AS(load_weights<float>(kTmpWeights, config), shape_mismatch_error);

    bad = good;
    bad[8] = 5;  // tensor count
    dump(bad);
    CHECK_THROWS_AS(load_weights<float>(kTmpWeights, config), shape_mismatch_error);

    CHECK_THROWS_AS(load_weights<float>("no_such_file.gdnw", config), io_error);
    std::remove(kTmpWeights);
}
