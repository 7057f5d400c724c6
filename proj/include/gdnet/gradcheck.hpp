#pragma once

// Central finite-difference gradients, used as the independent oracle for
// every analytic gradient in the library. Kept separate from the tape so the
// two code paths share nothing.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gdnet/tensor.hpp"

namespace gdnet {

template <typename Real>
struct FdDefaults;

template <>
struct FdDefaults<float> {
    static constexpr float step = 1e-3f;
};
template <>
struct FdDefaults<double> {
    static constexpr double step = 1e-6;
};

/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element i.
template <typename Real>
Tensor<Real> finite_diff_grad(const std::function<Real(const Tensor<Real>&)>& f,
                              const Tensor<Real>& at, Real h = FdDefaults<Real>::step) {
    Tensor<Real> grad(at.shape);
    Tensor<Real> probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const Real orig = probe.data[i];
        probe.data[i] = orig + h;
        const Real up = f(probe);
        probe.data[i] = orig - h;
        const Real down = f(probe);
        probe.data[i] = orig;
        grad.data[i] = (up - down) / (Real(2) * h);
    }
    return grad;
}

/// Directional derivative (f(x + h v) - f(x - h v)) / 2h; cheaper and far
/// less noise-prone than per-element differences on large parameter blocks.
template <typename Real>
Real finite_diff_directional(const std::function<Real(const Tensor<Real>&)>& f,
                             const Tensor<Real>& at, const Tensor<Real>& dir,
                             Real h = FdDefaults<Real>::step) {
    Tensor<Real> probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) probe.data[i] = at.data[i] + h * dir.data[i];
    const Real up = f(probe);
    for (std::size_t i = 0; i < at.size(); ++i) probe.data[i] = at.data[i] - h * dir.data[i];
    const Real down = f(probe);
    return (up - down) / (Real(2) * h);
}

/// |a-b| relative to the larger magnitude, floored so that near-zero pairs
/// compare on an absolute scale instead of blowing up.
template <typename Real>
Real relative_error(Real a, Real b, Real floor = Real(1e-3)) {
    const Real denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

/// Result of a sampled per-element finite-difference check over a set of
/// parameter blocks.
template <typename Real>
struct SampledFdResult {
    Real worst_error = 0;
    int used = 0;
    int skipped = 0;
};

/// Spot-checks analytic gradients of a scalar loss with respect to many
/// parameter blocks by central differences on randomly sampled elements.
/// Each probe is evaluated at two step sizes; probes where the two estimates
/// disagree beyond `agree_tol` are skipped as numerically untrustworthy
/// (either a kink of the piecewise-smooth graph sits inside the stencil, or
/// rounding noise dominates). A wrong analytic gradient is still caught:
/// at a smooth point both step sizes agree with each other and jointly
/// disagree with the analytic value, which fails the comparison below.
template <typename Real>
SampledFdResult<Real> sampled_param_gradcheck(const std::function<Real()>& loss,
                                              const std::vector<Tensor<Real>*>& params,
                                              const std::vector<Tensor<Real>>& analytic,
                                              std::uint64_t seed, int probes_per_block,
                                              Real coarse_h, Real fine_h, Real agree_tol,
                                              Real floor) {
    SampledFdResult<Real> result;
    for (std::size_t g = 0; g < params.size(); ++g) {
        std::mt19937_64 rng(derive_seed(seed, 0x5a, g));
        for (int rep = 0; rep < probes_per_block; ++rep) {
            const std::size_t i = rng() % params[g]->size();
            const Real orig = params[g]->data[i];
            auto fd_at = [&](Real h) {
                params[g]->data[i] = orig + h;
                const Real up = loss();
                params[g]->data[i] = orig - h;
                const Real down = loss();
                params[g]->data[i] = orig;
                return (up - down) / (Real(2) * h);
            };
            const Real coarse = fd_at(coarse_h);
            const Real fine = fd_at(fine_h);
            if (relative_error(coarse, fine, floor) > agree_tol) {
                ++result.skipped;
                continue;
            }
            ++result.used;
            result.worst_error =
                std::max(result.worst_error, relative_error(analytic[g].data[i], coarse, floor));
        }
    }
    return result;
}

/// Max relative error between an analytic gradient tensor and its
/// finite-difference counterpart.
template <typename Real>
Real max_grad_error(const Tensor<Real>& analytic, const Tensor<Real>& numeric,
                    Real floor = Real(1e-3)) {
    Real worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, relative_error(analytic.data[i], numeric.data[i], floor));
    return worst;
}

}  // namespace gdnet
