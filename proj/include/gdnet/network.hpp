#pragma once

// The full classifier: five GD layers with interleaved dropout, global
// max-pooling, and a single sigmoid output neuron. Also parameter
// initialization and the binary weight-file format.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "gdnet/layer.hpp"
#include "gdnet/tensor.hpp"

namespace gdnet {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct bad_magic_error : io_error {
    using io_error::io_error;
};
struct bad_version_error : io_error {
    using io_error::io_error;
};
struct truncated_file_error : io_error {
    using io_error::io_error;
};
struct shape_mismatch_error : io_error {
    using io_error::io_error;
};

struct GDNetConfig {
    std::array<int, 5> branch_widths{16, 16, 32, 32, 32};
    // dropout rate applied after each layer (0 = none)
    std::array<double, 5> dropout_after{0.0, 0.25, 0.0, 0.25, 0.5};
    int input_channels = 1;
    int spatial = 32;

    std::array<int, 5> layer_channels() const {
        std::array<int, 5> out{};
        for (int i = 0; i < 5; ++i) out[i] = 2 * branch_widths[i];
        return out;
    }

    int in_channels_of(int layer) const {
        return layer == 0 ? input_channels : 2 * branch_widths[layer - 1];
    }

    /// Closed-form trainable parameter count: per layer 2*S*C_in*9 conv
    /// weights plus the subnet (C_in*9 + 2), plus the 64+1 head.
    long parameter_count() const {
        long total = 0;
        for (int l = 0; l < 5; ++l) {
            const long c_in = in_channels_of(l);
            total += 2L * branch_widths[l] * c_in * 9 + c_in * 9 + 2;
        }
        total += layer_channels()[4] + 1;
        return total;
    }
};

template <typename Real>
struct GDNetParams {
    std::array<GDLayerParams<Real>, 5> layers;
    Tensor<Real> head_weight;  // 64 x 1
    Tensor<Real> head_bias;    // 1
};

template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>*>> named_params(GDNetParams<Real>& p) {
    std::vector<std::pair<std::string, Tensor<Real>*>> out;
    for (int l = 0; l < 5; ++l) {
        const std::string base = "layer" + std::to_string(l + 1) + ".";
        out.emplace_back(base + "k1", &p.layers[l].k1);
        out.emplace_back(base + "k2", &p.layers[l].k2);
        out.emplace_back(base + "attn_kernel", &p.layers[l].subnet.attn_kernel);
        out.emplace_back(base + "neuron_weight", &p.layers[l].subnet.neuron_weight);
        out.emplace_back(base + "neuron_bias", &p.layers[l].subnet.neuron_bias);
    }
    out.emplace_back("head.weight", &p.head_weight);
    out.emplace_back("head.bias", &p.head_bias);
    return out;
}

template <typename Real>
std::vector<Tensor<Real>*> param_list(GDNetParams<Real>& p) {
    std::vector<Tensor<Real>*> out;
    for (auto& [name, t] : named_params(p)) out.push_back(t);
    return out;
}

namespace detail {

template <typename Real>
Tensor<Real> xavier_uniform(std::vector<int> shape, int fan_in, int fan_out,
                            std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<Real> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<Real>(u(rng));
    return t;
}

}  // namespace detail

/// Xavier-uniform weights (conv fans counted as C*k*k), zero biases,
/// deterministic per seed.
template <typename Real>
GDNetParams<Real> init_network(const GDNetConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GDNetParams<Real> p;
    for (int l = 0; l < 5; ++l) {
        const int c_in = config.in_channels_of(l);
        const int s = config.branch_widths[l];
        p.layers[l].k1 = detail::xavier_uniform<Real>({s, c_in, 3, 3}, c_in * 9, s * 9, rng);
        p.layers[l].k2 = detail::xavier_uniform<Real>({s, c_in, 3, 3}, c_in * 9, s * 9, rng);
        p.layers[l].subnet.attn_kernel =
            detail::xavier_uniform<Real>({1, c_in, 3, 3}, c_in * 9, 9, rng);
        p.layers[l].subnet.neuron_weight = detail::xavier_uniform<Real>({1, 1}, 1, 1, rng);
        p.layers[l].subnet.neuron_bias = Tensor<Real>({1});
    }
    const int features = config.layer_channels()[4];
    p.head_weight = detail::xavier_uniform<Real>({features, 1}, features, 1, rng);
    p.head_bias = Tensor<Real>({1});
    return p;
}

template <typename Real>
struct NetVars {
    std::array<GDLayerVars<Real>, 5> layers;
    typename Tape<Real>::Var head_weight, head_bias;
};

template <typename Real>
NetVars<Real> register_network(Tape<Real>& tape, GDNetParams<Real>& p,
                               bool requires_grad = true) {
    NetVars<Real> v;
    for (int l = 0; l < 5; ++l) v.layers[l] = register_layer(tape, p.layers[l], requires_grad);
    v.head_weight = tape.input(p.head_weight, requires_grad);
    v.head_bias = tape.input(p.head_bias, requires_grad);
    return v;
}

/// Builds the forward graph on an existing tape. Returns the probability
/// var (shape N); per-layer alpha vars are appended to alphas_out if given.
template <typename Real>
typename Tape<Real>::Var forward_graph(Tape<Real>& tape, const NetVars<Real>& net,
                                       typename Tape<Real>::Var x, const GDNetConfig& config,
                                       bool training, std::uint64_t dropout_seed,
                                       std::vector<typename Tape<Real>::Var>* alphas_out = nullptr) {
    auto cur = x;
    for (int l = 0; l < 5; ++l) {
        auto res = gd_forward(tape, cur, net.layers[l]);
        cur = res.features;
        if (alphas_out) alphas_out->push_back(res.alpha);
        const double rate = config.dropout_after[l];
        if (rate > 0.0)
            cur = tape.dropout(cur, static_cast<Real>(rate), training,
                               derive_seed(dropout_seed, static_cast<std::uint64_t>(l)));
    }
    auto pooled = tape.pool_global(cur, PoolMode::Max);
    auto logit = tape.dense(pooled, net.head_weight, net.head_bias);
    auto prob = tape.sigmoid(logit);
    return tape.reshape(prob, {tape.value(x).extent(0)});
}

template <typename Real>
struct ForwardResult {
    typename Tensor<Real>::DataVec probabilities;  // N, strictly in (0,1)
    Tensor<Real> alphas;              // N x 5
};

/// Convenience forward pass on a private tape (no gradients kept).
template <typename Real>
ForwardResult<Real> forward(GDNetParams<Real>& params, const Tensor<Real>& batch,
                            const GDNetConfig& config = {}, bool training = false,
                            std::uint64_t dropout_seed = 0) {
    if (batch.rank() != 4 || batch.extent(1) != config.input_channels ||
        batch.extent(2) != config.spatial || batch.extent(3) != config.spatial)
        throw std::invalid_argument("forward: expected batch of shape Nx" +
                                    std::to_string(config.input_channels) + "x" +
                                    std::to_string(config.spatial) + "x" +
                                    std::to_string(config.spatial));
    Tape<Real> tape;
    auto net = register_network(tape, params, /*requires_grad=*/false);
    auto x = tape.input(batch, false);
    std::vector<typename Tape<Real>::Var> alpha_vars;
    auto prob = forward_graph(tape, net, x, config, training, dropout_seed, &alpha_vars);

    const int n = batch.extent(0);
    ForwardResult<Real> out;
    out.probabilities = tape.value(prob).data;
    out.alphas = Tensor<Real>({n, 5});
    for (int l = 0; l < 5; ++l) {
        const auto& a = tape.value(alpha_vars[l]);
        for (int i = 0; i < n; ++i) out.alphas.data[static_cast<std::size_t>(i) * 5 + l] = a.data[i];
    }
    return out;
}

/// Test-time view averaging: mean probability over the given single-sample
/// views; the caller decides what the views are (e.g. the four rotations).
template <typename Real>
Real predict_views(GDNetParams<Real>& params, const std::vector<Tensor<Real>>& views,
                   const GDNetConfig& config = {}) {
    if (views.empty()) throw std::invalid_argument("predict_views: no views given");
    double acc = 0.0;
    for (const auto& v : views) {
        auto r = forward(params, v, config, false);
        if (r.probabilities.size() != 1)
            throw std::invalid_argument("predict_views: each view must be a single sample");
        acc += static_cast<double>(r.probabilities[0]);
    }
    return static_cast<Real>(acc / views.size());
}

// --- weight file: magic "GDNW", version u32, tensor count u32, then per
// --- tensor: name len u16 + name, rank u8, extents u32[rank], f32 data.
// --- All integers and reals little-endian.

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline bool get_bytes(std::istream& is, void* dst, std::size_t n) {
    is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(is.gcount()) == n;
}

inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    if (!get_bytes(is, b, 2)) throw truncated_file_error("weight file truncated");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!get_bytes(is, b, 4)) throw truncated_file_error("weight file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline float get_f32(std::istream& is) {
    std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline constexpr std::uint32_t kWeightFileVersion = 1;

template <typename Real>
void save_weights(GDNetParams<Real>& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open weight file for writing: " + path);
    os.write("GDNW", 4);
    detail::put_u32(os, kWeightFileVersion);
    auto named = named_params(params);
    detail::put_u32(os, static_cast<std::uint32_t>(named.size()));
    for (auto& [name, t] : named) {
        detail::put_u16(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(static_cast<char>(t->rank()));
        for (int i = 0; i < t->rank(); ++i)
            detail::put_u32(os, static_cast<std::uint32_t>(t->extent(i)));
        for (Real v : t->data) detail::put_f32(os, static_cast<float>(v));
    }
    if (!os) throw io_error("failed writing weight file: " + path);
}

template <typename Real>
GDNetParams<Real> load_weights(const std::string& path, const GDNetConfig& config = {}) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open weight file: " + path);
    char magic[4];
    if (!detail::get_bytes(is, magic, 4)) throw truncated_file_error("weight file truncated");
    if (std::string(magic, 4) != "GDNW") throw bad_magic_error("bad magic in weight file");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kWeightFileVersion)
        throw bad_version_error("unsupported weight file version " + std::to_string(version));

    GDNetParams<Real> params = init_network<Real>(config, 0);  // shapes only
    auto named = named_params(params);
    const std::uint32_t count = detail::get_u32(is);
    if (count != named.size())
        throw shape_mismatch_error("weight file holds " + std::to_string(count) +
                                   " tensors, expected " + std::to_string(named.size()));
    for (auto& [expected_name, t] : named) {
        const std::uint16_t name_len = detail::get_u16(is);
        std::string name(name_len, '\0');
        if (!detail::get_bytes(is, name.data(), name_len))
            throw truncated_file_error("weight file truncated");
        if (name != expected_name)
            throw shape_mismatch_error("unexpected tensor '" + name + "', expected '" +
                                       expected_name + "'");
        char rank_byte;
        if (!detail::get_bytes(is, &rank_byte, 1)) throw truncated_file_error("weight file truncated");
        const int rank = static_cast<unsigned char>(rank_byte);
        if (rank != t->rank())
            throw shape_mismatch_error("tensor '" + name + "' rank mismatch");
        for (int i = 0; i < rank; ++i) {
            const std::uint32_t e = detail::get_u32(is);
            if (static_cast<int>(e) != t->extent(i))
                throw shape_mismatch_error("tensor '" + name + "' extent mismatch");
        }
        for (auto& v : t->data) v = static_cast<Real>(detail::get_f32(is));
    }
    return params;
}

}  // namespace gdnet
