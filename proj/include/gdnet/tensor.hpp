#pragma once

// Dense float tensors with a tape-based reverse-mode autodiff engine.
// The tape owns every intermediate value; operations append nodes and
// backward() walks the records in reverse. Convolutions are lowered to
// im2col + gemm (Eigen) since they dominate the runtime.

#include <Eigen/Dense>

#if defined(__GLIBC__) || defined(__linux__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdnet {

/// Mixes seed components into one 64-bit stream seed (splitmix64 rounds),
/// so that (run seed, epoch, batch) triples give independent RNG streams.
inline std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t x = a;
    for (std::uint64_t salt : {b + 0x9e3779b97f4a7c15ull, c + 0xbf58476d1ce4e5b9ull}) {
        x += salt;
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
    }
    return x;
}

namespace detail {

// std::vector value-initializes on resize; this allocator leaves elements
// default-initialized so freshly allocated op outputs skip the zero fill.
template <typename T>
struct default_init_allocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = default_init_allocator<U>;
    };
    template <typename U>
    void construct(U* ptr) noexcept {
        ::new (static_cast<void*>(ptr)) U;
    }
    template <typename U, typename... Args>
    void construct(U* ptr, Args&&... args) {
        ::new (static_cast<void*>(ptr)) U(std::forward<Args>(args)...);
    }
};

}  // namespace detail

struct uninitialized_t {};
inline constexpr uninitialized_t uninitialized{};

template <typename Real>
struct Tensor {
    using DataVec = std::vector<Real, detail::default_init_allocator<Real>>;

    std::vector<int> shape;
    DataVec data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, Real fill = Real(0)) : shape(std::move(s)) {
        data.assign(check_shape(shape), fill);
    }

    // every element is about to be overwritten; skip the fill
    Tensor(std::vector<int> s, uninitialized_t) : shape(std::move(s)) {
        data.resize(check_shape(shape));
    }

    static Tensor from(std::vector<int> s, std::vector<Real> values) {
        Tensor t;
        t.shape = std::move(s);
        if (check_shape(t.shape) != values.size())
            throw std::invalid_argument("Tensor: data length does not match shape");
        t.data.assign(values.begin(), values.end());
        return t;
    }

    static Tensor from(std::vector<int> s, DataVec values) {
        Tensor t;
        t.shape = std::move(s);
        if (check_shape(t.shape) != values.size())
            throw std::invalid_argument("Tensor: data length does not match shape");
        t.data = std::move(values);
        return t;
    }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    int extent(int i) const { return shape.at(static_cast<std::size_t>(i)); }

    // NCHW accessor
    Real& at(int n, int c, int h, int w) {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    Real at(int n, int c, int h, int w) const {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

private:
    static std::size_t check_shape(const std::vector<int>& s) {
        if (s.empty()) throw std::invalid_argument("Tensor: empty shape");
        std::size_t n = 1;
        for (int e : s) {
            if (e < 1) throw std::invalid_argument("Tensor: all extents must be >= 1");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }
};

enum class Activation { Relu, Sigmoid };
enum class PoolMode { Avg, Max };

inline constexpr double kBceEps = 1e-7;

namespace detail {

// Large tape buffers are allocated and freed every batch; stop glibc from
// handing them straight back to the kernel (mmap/munmap page-fault churn
// costs more than the arithmetic on multi-MB tensors).
inline void tune_malloc_once() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        return true;
    }();
    (void)done;
#endif
}

}  // namespace detail

template <typename Real>
class Tape {
public:
    struct Var {
        int id = -1;
    };

    Tape() { detail::tune_malloc_once(); }

    /// Registers a leaf tensor. Gradients are accumulated for it only when
    /// requires_grad is set.
    Var input(Tensor<Real> value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, nullptr);
    }

    const Tensor<Real>& value(Var v) const { return node(v).value; }
    const Tensor<Real>& grad(Var v) const { return node(v).grad; }

    // --- primitive operations -------------------------------------------

    /// "Same"-padded 2-D convolution (cross-correlation orientation) with
    /// dilation. Input NCHW, kernel OIKhKw, stride fixed at 1. Output keeps
    /// the spatial size; padding is r*(k-1)/2 per side.
    Var conv2d_dilated(Var input, Var kernel, int dilation) {
        const Tensor<Real>& x = value(input);
        const Tensor<Real>& k = value(kernel);
        if (x.rank() != 4) throw std::invalid_argument("conv2d_dilated: input must be NCHW");
        if (k.rank() != 4) throw std::invalid_argument("conv2d_dilated: kernel must be OIKhKw");
        if (dilation < 1) throw std::invalid_argument("conv2d_dilated: dilation rate must be >= 1");
        const int kh = k.extent(2), kw = k.extent(3);
        if (kh != kw) throw std::invalid_argument("conv2d_dilated: kernel must be square");
        if (kh % 2 == 0)
            throw std::invalid_argument("conv2d_dilated: even kernel extent has no same-padding");
        if (k.extent(1) != x.extent(1))
            throw std::invalid_argument("conv2d_dilated: kernel input channels (" +
                                        std::to_string(k.extent(1)) + ") != input channels (" +
                                        std::to_string(x.extent(1)) + ")");
        if ((dilation * (kh - 1)) % 2 != 0)
            throw std::invalid_argument("conv2d_dilated: non-integral padding");

        const int n = x.extent(0), c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
        const int c_out = k.extent(0);
        Tensor<Real> out({n, c_out, h, w}, uninitialized);

        const int taps = c_in * kh * kw;
        const int hw = h * w;
        std::vector<Real> cols(static_cast<std::size_t>(taps) * hw);
        MapConst kmat(k.data.data(), c_out, taps);
        for (int s = 0; s < n; ++s) {
            im2col(x, s, kh, dilation, cols.data());
            MapConst cmat(cols.data(), taps, hw);
            Map omat(out.data.data() + static_cast<std::size_t>(s) * c_out * hw, c_out, hw);
            omat.noalias() = kmat * cmat;
        }

        bool rg = needs_grad(input) || needs_grad(kernel);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, kernel, y, kh, dilation] {
                conv_backward(input, kernel, y, kh, dilation);
            };
        }
        return y;
    }

    Var activation(Var input, Activation kind) {
        const Tensor<Real>& x = value(input);
        Tensor<Real> out(x.shape, uninitialized);
        if (kind == Activation::Relu) {
            for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0 ? x.data[i] : Real(0);
        } else {
            for (std::size_t i = 0; i < x.size(); ++i)
                out.data[i] = Real(1) / (Real(1) + std::exp(-x.data[i]));
        }
        bool rg = needs_grad(input);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, y, kind] {
                const Tensor<Real>& gy = node(y).grad;
                const Tensor<Real>& yv = node(y).value;
                const Tensor<Real>& xv = node(input).value;
                Tensor<Real>& gx = node(input).grad;
                if (kind == Activation::Relu) {
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        if (xv.data[i] > 0) gx.data[i] += gy.data[i];
                } else {
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        gx.data[i] += gy.data[i] * yv.data[i] * (Real(1) - yv.data[i]);
                }
            };
        }
        return y;
    }

    Var relu(Var v) { return activation(v, Activation::Relu); }
    Var sigmoid(Var v) { return activation(v, Activation::Sigmoid); }

    /// Global pooling NCHW -> N x C (mean or max over all spatial positions).
    Var pool_global(Var input, PoolMode mode) {
        const Tensor<Real>& x = value(input);
        if (x.rank() != 4) throw std::invalid_argument("pool_global: input must be NCHW");
        const int n = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
        Tensor<Real> out({n, c}, uninitialized);
        auto argmax = std::make_shared<std::vector<int>>();
        if (mode == PoolMode::Max) argmax->resize(static_cast<std::size_t>(n) * c);
        for (int s = 0; s < n; ++s) {
            for (int ch = 0; ch < c; ++ch) {
                const Real* p = x.data.data() + (static_cast<std::size_t>(s) * c + ch) * hw;
                if (mode == PoolMode::Avg) {
                    Real acc = 0;
                    for (int i = 0; i < hw; ++i) acc += p[i];
                    out.data[static_cast<std::size_t>(s) * c + ch] = acc / Real(hw);
                } else {
                    int best = 0;
                    for (int i = 1; i < hw; ++i)
                        if (p[i] > p[best]) best = i;
                    out.data[static_cast<std::size_t>(s) * c + ch] = p[best];
                    (*argmax)[static_cast<std::size_t>(s) * c + ch] = best;
                }
            }
        }
        bool rg = needs_grad(input);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, y, mode, hw, argmax] {
                const Tensor<Real>& gy = node(y).grad;
                Tensor<Real>& gx = node(input).grad;
                for (std::size_t j = 0; j < gy.size(); ++j) {
                    Real g = gy.data[j];
                    Real* p = gx.data.data() + j * hw;
                    if (mode == PoolMode::Avg) {
                        Real share = g / Real(hw);
                        for (int i = 0; i < hw; ++i) p[i] += share;
                    } else {
                        p[(*argmax)[j]] += g;
                    }
                }
            };
        }
        return y;
    }

    /// Affine map per sample: (N x F) * (F x G) + bias(G).
    Var dense(Var input, Var weight, Var bias) {
        const Tensor<Real>& x = value(input);
        const Tensor<Real>& wt = value(weight);
        const Tensor<Real>& b = value(bias);
        if (x.rank() != 2 || wt.rank() != 2 || b.rank() != 1)
            throw std::invalid_argument("dense: expected input NxF, weight FxG, bias G");
        if (x.extent(1) != wt.extent(0) || wt.extent(1) != b.extent(0))
            throw std::invalid_argument("dense: inner extents mismatch");
        const int n = x.extent(0), f = x.extent(1), g = wt.extent(1);
        Tensor<Real> out({n, g}, uninitialized);
        MapConst xm(x.data.data(), n, f), wm(wt.data.data(), f, g);
        Map om(out.data.data(), n, g);
        om.noalias() = xm * wm;
        for (int s = 0; s < n; ++s)
            for (int j = 0; j < g; ++j) out.data[static_cast<std::size_t>(s) * g + j] += b.data[j];

        bool rg = needs_grad(input) || needs_grad(weight) || needs_grad(bias);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, weight, bias, y, n, f, g] {
                MapConst gy(node(y).grad.data.data(), n, g);
                if (needs_grad(input)) {
                    MapConst wm(node(weight).value.data.data(), f, g);
                    Map gx(node(input).grad.data.data(), n, f);
                    gx.noalias() += gy * wm.transpose();
                }
                if (needs_grad(weight)) {
                    MapConst xm(node(input).value.data.data(), n, f);
                    Map gw(node(weight).grad.data.data(), f, g);
                    gw.noalias() += xm.transpose() * gy;
                }
                if (needs_grad(bias)) {
                    Tensor<Real>& gb = node(bias).grad;
                    for (int s = 0; s < n; ++s)
                        for (int j = 0; j < g; ++j)
                            gb.data[j] += node(y).grad.data[static_cast<std::size_t>(s) * g + j];
                }
            };
        }
        return y;
    }

    /// Channel-wise concatenation; channels of a precede channels of b.
    Var concat_channels(Var a, Var b) {
        const Tensor<Real>& ta = value(a);
        const Tensor<Real>& tb = value(b);
        if (ta.rank() != 4 || tb.rank() != 4)
            throw std::invalid_argument("concat_channels: inputs must be NCHW");
        if (ta.extent(0) != tb.extent(0) || ta.extent(2) != tb.extent(2) ||
            ta.extent(3) != tb.extent(3))
            throw std::invalid_argument("concat_channels: batch/spatial extents mismatch");
        const int n = ta.extent(0), ca = ta.extent(1), cb = tb.extent(1);
        const int hw = ta.extent(2) * ta.extent(3);
        Tensor<Real> out({n, ca + cb, ta.extent(2), ta.extent(3)}, uninitialized);
        for (int s = 0; s < n; ++s) {
            std::copy_n(ta.data.data() + static_cast<std::size_t>(s) * ca * hw, ca * hw,
                        out.data.data() + static_cast<std::size_t>(s) * (ca + cb) * hw);
            std::copy_n(tb.data.data() + static_cast<std::size_t>(s) * cb * hw, cb * hw,
                        out.data.data() + (static_cast<std::size_t>(s) * (ca + cb) + ca) * hw);
        }
        bool rg = needs_grad(a) || needs_grad(b);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, a, b, y, n, ca, cb, hw] {
                const Tensor<Real>& gy = node(y).grad;
                for (int s = 0; s < n; ++s) {
                    if (needs_grad(a)) {
                        Real* ga = node(a).grad.data.data() + static_cast<std::size_t>(s) * ca * hw;
                        const Real* src = gy.data.data() + static_cast<std::size_t>(s) * (ca + cb) * hw;
                        for (int i = 0; i < ca * hw; ++i) ga[i] += src[i];
                    }
                    if (needs_grad(b)) {
                        Real* gb = node(b).grad.data.data() + static_cast<std::size_t>(s) * cb * hw;
                        const Real* src =
                            gy.data.data() + (static_cast<std::size_t>(s) * (ca + cb) + ca) * hw;
                        for (int i = 0; i < cb * hw; ++i) gb[i] += src[i];
                    }
                }
            };
        }
        return y;
    }

    /// Multiplies every element of sample n by the per-sample scalar s_n.
    /// Gradient flows to both the input and the scalars.
    Var scale_by_scalar(Var input, Var scalars) {
        const Tensor<Real>& x = value(input);
        const Tensor<Real>& s = value(scalars);
        if (s.rank() != 1 || s.extent(0) != x.extent(0))
            throw std::invalid_argument("scale_by_scalar: need one scalar per batch sample");
        const int n = x.extent(0);
        const std::size_t per = x.size() / static_cast<std::size_t>(n);
        Tensor<Real> out(x.shape, uninitialized);
        for (int i = 0; i < n; ++i) {
            Real f = s.data[i];
            const Real* src = x.data.data() + i * per;
            Real* dst = out.data.data() + i * per;
            for (std::size_t j = 0; j < per; ++j) dst[j] = f * src[j];
        }
        bool rg = needs_grad(input) || needs_grad(scalars);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, scalars, y, n, per] {
                const Tensor<Real>& gy = node(y).grad;
                const Tensor<Real>& xv = node(input).value;
                const Tensor<Real>& sv = node(scalars).value;
                for (int i = 0; i < n; ++i) {
                    const Real* g = gy.data.data() + i * per;
                    if (needs_grad(input)) {
                        Real* gx = node(input).grad.data.data() + i * per;
                        Real f = sv.data[i];
                        for (std::size_t j = 0; j < per; ++j) gx[j] += f * g[j];
                    }
                    if (needs_grad(scalars)) {
                        const Real* xp = xv.data.data() + i * per;
                        Real acc = 0;
                        for (std::size_t j = 0; j < per; ++j) acc += xp[j] * g[j];
                        node(scalars).grad.data[i] += acc;
                    }
                }
            };
        }
        return y;
    }

    /// Elementwise 1 - x (used for the complementary gate).
    Var one_minus(Var input) {
        const Tensor<Real>& x = value(input);
        Tensor<Real> out(x.shape, uninitialized);
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = Real(1) - x.data[i];
        bool rg = needs_grad(input);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, y] {
                const Tensor<Real>& gy = node(y).grad;
                Tensor<Real>& gx = node(input).grad;
                for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] -= gy.data[i];
            };
        }
        return y;
    }

    /// Inverted dropout: survivors scaled by 1/(1-rate) so inference is the
    /// identity. Identity when training is off or rate == 0.
    Var dropout(Var input, Real rate, bool training, std::uint64_t rng_seed) {
        if (!(rate >= Real(0) && rate < Real(1)))
            throw std::invalid_argument("dropout: rate must lie in [0,1)");
        const Tensor<Real>& x = value(input);
        if (!training || rate == Real(0)) return identity(input);

        auto mask = std::make_shared<std::vector<Real>>(x.size());
        std::mt19937_64 rng(rng_seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const Real keep_scale = Real(1) / (Real(1) - rate);
        Tensor<Real> out(x.shape, uninitialized);
        for (std::size_t i = 0; i < x.size(); ++i) {
            Real f = u(rng) < static_cast<double>(rate) ? Real(0) : keep_scale;
            (*mask)[i] = f;
            out.data[i] = f * x.data[i];
        }
        bool rg = needs_grad(input);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, y, mask] {
                const Tensor<Real>& gy = node(y).grad;
                Tensor<Real>& gx = node(input).grad;
                for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += (*mask)[i] * gy.data[i];
            };
        }
        return y;
    }

    /// Mean binary cross-entropy over the batch; predictions are clamped to
    /// [eps, 1-eps] before the logs.
    Var bce_loss(Var predictions, const std::vector<int>& labels) {
        const Tensor<Real>& p = value(predictions);
        if (p.rank() != 1 || static_cast<std::size_t>(p.extent(0)) != labels.size())
            throw std::invalid_argument("bce_loss: predictions and labels length mismatch");
        for (int y : labels)
            if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: labels must be 0 or 1");
        const int n = p.extent(0);
        const Real lo = Real(kBceEps), hi = Real(1.0 - kBceEps);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            Real pc = std::clamp(p.data[i], lo, hi);
            acc += labels[i] ? -std::log(static_cast<double>(pc))
                             : -std::log(1.0 - static_cast<double>(pc));
        }
        Tensor<Real> out({1});
        out.data[0] = static_cast<Real>(acc / n);
        bool rg = needs_grad(predictions);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, predictions, y, labels, n, lo, hi] {
                Real g = node(y).grad.data[0] / Real(n);
                const Tensor<Real>& pv = node(predictions).value;
                Tensor<Real>& gp = node(predictions).grad;
                for (int i = 0; i < n; ++i) {
                    Real pc = std::clamp(pv.data[i], lo, hi);
                    gp.data[i] += g * (labels[i] ? -Real(1) / pc : Real(1) / (Real(1) - pc));
                }
            };
        }
        return y;
    }

    // --- small helpers used by the network head and by tests -------------

    Var reshape(Var input, std::vector<int> shape) {
        const Tensor<Real>& x = value(input);
        Tensor<Real> out = Tensor<Real>::from(std::move(shape), x.data);
        bool rg = needs_grad(input);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, y] {
                const Tensor<Real>& gy = node(y).grad;
                Tensor<Real>& gx = node(input).grad;
                for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += gy.data[i];
            };
        }
        return y;
    }

    Var add(Var a, Var b) {
        const Tensor<Real>& ta = value(a);
        const Tensor<Real>& tb = value(b);
        if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
        Tensor<Real> out(ta.shape, uninitialized);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
        bool rg = needs_grad(a) || needs_grad(b);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, a, b, y] {
                const Tensor<Real>& gy = node(y).grad;
                if (needs_grad(a))
                    for (std::size_t i = 0; i < gy.size(); ++i) node(a).grad.data[i] += gy.data[i];
                if (needs_grad(b))
                    for (std::size_t i = 0; i < gy.size(); ++i) node(b).grad.data[i] += gy.data[i];
            };
        }
        return y;
    }

    Var mul(Var a, Var b) {
        const Tensor<Real>& ta = value(a);
        const Tensor<Real>& tb = value(b);
        if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
        Tensor<Real> out(ta.shape, uninitialized);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
        bool rg = needs_grad(a) || needs_grad(b);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, a, b, y] {
                const Tensor<Real>& gy = node(y).grad;
                if (needs_grad(a))
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        node(a).grad.data[i] += gy.data[i] * node(b).value.data[i];
                if (needs_grad(b))
                    for (std::size_t i = 0; i < gy.size(); ++i)
                        node(b).grad.data[i] += gy.data[i] * node(a).value.data[i];
            };
        }
        return y;
    }

    Var sum(Var input) {
        const Tensor<Real>& x = value(input);
        double acc = 0.0;
        for (Real v : x.data) acc += static_cast<double>(v);
        Tensor<Real> out({1});
        out.data[0] = static_cast<Real>(acc);
        bool rg = needs_grad(input);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, y] {
                Real g = node(y).grad.data[0];
                Tensor<Real>& gx = node(input).grad;
                for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g;
            };
        }
        return y;
    }

    /// Reverse-topological gradient accumulation from a scalar loss.
    void backward(Var loss) {
        if (value(loss).size() != 1)
            throw std::invalid_argument("backward: loss must be a scalar tensor");
        if (grads_dirty_) {
            for (auto& n : nodes_)
                if (n.requires_grad) std::fill(n.grad.data.begin(), n.grad.data.end(), Real(0));
        }
        grads_dirty_ = true;
        node(loss).grad.data[0] = Real(1);
        for (int i = loss.id; i >= 0; --i)
            if (nodes_[i].requires_grad && nodes_[i].backprop) nodes_[i].backprop();
    }

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    using Map = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using MapConst =
        Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        bool requires_grad = false;
        std::function<void()> backprop;
    };

    std::vector<Node> nodes_;
    bool grads_dirty_ = false;

    Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
    const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }
    bool needs_grad(Var v) const { return node(v).requires_grad; }

    Var push(Tensor<Real> value, bool requires_grad, std::function<void()> backprop) {
        Node n;
        n.requires_grad = requires_grad;
        if (requires_grad) n.grad = Tensor<Real>(value.shape);
        n.value = std::move(value);
        n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var identity(Var input) {
        Tensor<Real> out = value(input);
        bool rg = needs_grad(input);
        Var y = push(std::move(out), rg, nullptr);
        if (rg) {
            node(y).backprop = [this, input, y] {
                const Tensor<Real>& gy = node(y).grad;
                Tensor<Real>& gx = node(input).grad;
                for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += gy.data[i];
            };
        }
        return y;
    }

    // Lowers one sample of an NCHW tensor into a (C*k*k) x (H*W) patch
    // matrix for the given dilation; out-of-bounds taps read as zero.
    void im2col(const Tensor<Real>& x, int sample, int k, int dilation, Real* cols) const {
        const int c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
        const int pad = dilation * (k - 1) / 2;
        const int hw = h * w;
        for (int ci = 0; ci < c_in; ++ci) {
            const Real* plane =
                x.data.data() + (static_cast<std::size_t>(sample) * c_in + ci) * hw;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    Real* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
                    const int dy = ky * dilation - pad, dx = kx * dilation - pad;
                    for (int y = 0; y < h; ++y) {
                        const int iy = y + dy;
                        Real* dst = row + y * w;
                        if (iy < 0 || iy >= h) {
                            std::fill(dst, dst + w, Real(0));
                            continue;
                        }
                        const Real* src = plane + iy * w;
                        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                        if (x0 > 0) std::fill(dst, dst + x0, Real(0));
                        if (x1 > x0) std::copy(src + x0 + dx, src + x1 + dx, dst + x0);
                        if (x1 < w) std::fill(dst + std::max(x0, x1), dst + w, Real(0));
                    }
                }
            }
        }
    }

    void conv_backward(Var input, Var kernel, Var out, int k, int dilation) {
        const Tensor<Real>& x = node(input).value;
        const Tensor<Real>& kt = node(kernel).value;
        const Tensor<Real>& gy = node(out).grad;
        const int n = x.extent(0), c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
        const int c_out = kt.extent(0);
        const int taps = c_in * k * k;
        const int hw = h * w;
        const int pad = dilation * (k - 1) / 2;

        std::vector<Real> cols(static_cast<std::size_t>(taps) * hw);
        std::vector<Real> col_grad;
        if (needs_grad(input)) col_grad.resize(cols.size());
        MapConst kmat(kt.data.data(), c_out, taps);
        for (int s = 0; s < n; ++s) {
            MapConst gymat(gy.data.data() + static_cast<std::size_t>(s) * c_out * hw, c_out, hw);
            if (needs_grad(kernel)) {
                im2col(x, s, k, dilation, cols.data());
                MapConst cmat(cols.data(), taps, hw);
                Map gk(node(kernel).grad.data.data(), c_out, taps);
                gk.noalias() += gymat * cmat.transpose();
            }
            if (needs_grad(input)) {
                Map cg(col_grad.data(), taps, hw);
                cg.noalias() = kmat.transpose() * gymat;
                // col2im scatter-add
                Tensor<Real>& gx = node(input).grad;
                for (int ci = 0; ci < c_in; ++ci) {
                    Real* plane =
                        gx.data.data() + (static_cast<std::size_t>(s) * c_in + ci) * hw;
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const Real* row =
                                col_grad.data() +
                                (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
                            const int dy = ky * dilation - pad, dx = kx * dilation - pad;
                            for (int y = 0; y < h; ++y) {
                                const int iy = y + dy;
                                if (iy < 0 || iy >= h) continue;
                                const Real* src = row + y * w;
                                Real* dst = plane + iy * w;
                                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                                for (int xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
                            }
                        }
                    }
                }
            }
        }
    }
};

}  // namespace gdnet
