#pragma once

// Adam optimizer, the two-phase learning-rate schedule, the epoch loop and
// the stratified cross-validation harness.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gdnet/data.hpp"
#include "gdnet/metrics.hpp"
#include "gdnet/network.hpp"
#include "gdnet/tensor.hpp"

namespace gdnet {

template <typename Real>
struct AdamState {
    std::vector<Tensor<Real>> m, v;
    long t = 0;
    Real beta1 = Real(0.9), beta2 = Real(0.999), eps = Real(1e-8);

    static AdamState zero_like(const std::vector<Tensor<Real>*>& params) {
        AdamState s;
        for (auto* p : params) {
            s.m.emplace_back(p->shape);
            s.v.emplace_back(p->shape);
        }
        return s;
    }
};

/// One Adam update with bias correction:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
template <typename Real>
void adam_step(const std::vector<Tensor<Real>*>& params, const std::vector<Tensor<Real>>& grads,
               AdamState<Real>& state, Real lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.m[i]))
            throw std::invalid_argument("adam_step: shape mismatch in parameter group " +
                                        std::to_string(i));
    ++state.t;
    const Real c1 = Real(1) - std::pow(state.beta1, static_cast<Real>(state.t));
    const Real c2 = Real(1) - std::pow(state.beta2, static_cast<Real>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<Real>& theta = *params[i];
        const Tensor<Real>& g = grads[i];
        Tensor<Real>& m = state.m[i];
        Tensor<Real>& v = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m.data[j] = state.beta1 * m.data[j] + (Real(1) - state.beta1) * g.data[j];
            v.data[j] = state.beta2 * v.data[j] + (Real(1) - state.beta2) * g.data[j] * g.data[j];
            const Real m_hat = m.data[j] / c1;
            const Real v_hat = v.data[j] / c2;
            theta.data[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

struct TrainConfig {
    int batch_size = 32;
    int epochs = 2;
    double lr_initial = 1e-3;
    double lr_after = 1e-4;
    int switch_epoch = 1;  // last epoch of the initial phase
    std::uint64_t seed = 1;

    /// Full-scale protocol (batch 256, 50 epochs, switch after 20).
    static TrainConfig full_scale() {
        TrainConfig c;
        c.batch_size = 256;
        c.epochs = 50;
        c.switch_epoch = 20;
        return c;
    }
};

/// lr_initial through switch_epoch inclusive, lr_after afterwards.
inline double lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 1 || epoch > config.epochs)
        throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) +
                                    " outside [1, " + std::to_string(config.epochs) + "]");
    return epoch <= config.switch_epoch ? config.lr_initial : config.lr_after;
}

template <typename Real>
Tensor<Real> make_batch(const std::vector<LabeledImage<Real>>& images,
                        const std::vector<int>& indices, std::size_t first, std::size_t count) {
    const auto& shape = images[static_cast<std::size_t>(indices[first])].image.shape;
    Tensor<Real> batch({static_cast<int>(count), shape[0], shape[1], shape[2]});
    const std::size_t per = batch.size() / count;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& img = images[static_cast<std::size_t>(indices[first + i])].image;
        std::copy(img.data.begin(), img.data.end(), batch.data.begin() + i * per);
    }
    return batch;
}

/// SGD epoch loop: seeded per-epoch shuffles, one Adam step per batch,
/// mean BCE loss recorded per epoch. Fully deterministic per seed.
template <typename Real>
std::vector<double> train(GDNetParams<Real>& params, const std::vector<LabeledImage<Real>>& images,
                          const TrainConfig& config, const GDNetConfig& net_config = {}) {
    if (images.empty()) throw std::invalid_argument("train: empty dataset");
    if (config.switch_epoch > config.epochs)
        throw std::invalid_argument("train: switch_epoch exceeds epochs");

    auto plist = param_list(params);
    auto adam = AdamState<Real>::zero_like(plist);
    std::vector<int> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> loss_trace;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const Real lr = static_cast<Real>(lr_at_epoch(config, epoch));

        double epoch_loss = 0.0;
        long batches = 0;
        for (std::size_t start = 0; start < images.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(config.batch_size), images.size() - start);
            Tensor<Real> batch = make_batch(images, order, start, count);
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i)
                labels[i] = images[static_cast<std::size_t>(order[start + i])].label;

            Tape<Real> tape;
            auto net = register_network(tape, params);
            auto x = tape.input(batch, false);
            const std::uint64_t dropout_seed = derive_seed(
                config.seed, static_cast<std::uint64_t>(epoch), 1000003ull + batches);
            auto prob = forward_graph(tape, net, x, net_config, true, dropout_seed);
            auto loss = tape.bce_loss(prob, labels);
            tape.backward(loss);

            std::vector<Tensor<Real>> grads;
            grads.reserve(plist.size());
            auto collect = [&](const GDLayerVars<Real>& lv) {
                grads.push_back(tape.grad(lv.k1));
                grads.push_back(tape.grad(lv.k2));
                grads.push_back(tape.grad(lv.attn_kernel));
                grads.push_back(tape.grad(lv.neuron_weight));
                grads.push_back(tape.grad(lv.neuron_bias));
            };
            for (int l = 0; l < 5; ++l) collect(net.layers[l]);
            grads.push_back(tape.grad(net.head_weight));
            grads.push_back(tape.grad(net.head_bias));

            adam_step(plist, grads, adam, lr);
            epoch_loss += static_cast<double>(tape.value(loss).data[0]);
            ++batches;
        }
        loss_trace.push_back(epoch_loss / static_cast<double>(batches));
    }
    return loss_trace;
}

/// Scores one clean sample with test-time view averaging over the four
/// rotations, all normalized with the supplied (training-fold) statistics.
template <typename Real>
double score_sample(GDNetParams<Real>& params, const Sample<Real>& sample,
                    const ZScoreStats<Real>& stats, const GDNetConfig& net_config = {}) {
    std::vector<Tensor<Real>> views;
    for (auto& rot : rotate_views(sample.image)) {
        Tensor<Real> v = zscore_apply(rot, stats);
        views.push_back(Tensor<Real>::from({1, v.shape[0], v.shape[1], v.shape[2]},
                                           std::move(v.data)));
    }
    return static_cast<double>(predict_views(params, views, net_config));
}

template <typename Real>
struct CVResult {
    std::vector<MetricsReport> per_fold;
    MetricsReport pooled;
    std::vector<double> oof_scores;  // indexed like the dataset
    std::vector<int> oof_labels;
    std::vector<int> fold_of;  // test fold of each sample
    std::vector<ZScoreStats<Real>> fold_stats;
};

/// Stratified k-fold cross-validation. Per fold: augment and z-score-fit on
/// the training portion only, train from a fold-derived seed, score the
/// held-out fold with view averaging. Every sample is scored exactly once.
template <typename Real>
CVResult<Real> cross_validate(const std::vector<Sample<Real>>& samples, const TrainConfig& config,
                              int k = 10, const GDNetConfig& net_config = {}) {
    FoldSplit split = stratified_kfold(samples, k, config.seed);
    CVResult<Real> result;
    result.oof_scores.assign(samples.size(), 0.0);
    result.oof_labels.assign(samples.size(), 0);
    result.fold_of.assign(samples.size(), -1);

    for (int f = 0; f < k; ++f) {
        std::vector<Sample<Real>> train_samples;
        for (int g = 0; g < k; ++g) {
            if (g == f) continue;
            for (int idx : split.folds[static_cast<std::size_t>(g)])
                train_samples.push_back(samples[static_cast<std::size_t>(idx)]);
        }
        auto train_images = augment_dataset(train_samples);
        std::vector<Tensor<Real>> pixels;
        pixels.reserve(train_images.size());
        for (auto& li : train_images) pixels.push_back(li.image);
        auto stats = zscore_fit(pixels);
        for (auto& li : train_images) li.image = zscore_apply(li.image, stats);
        result.fold_stats.push_back(stats);

        TrainConfig fold_config = config;
        fold_config.seed = derive_seed(config.seed, 0xcf, static_cast<std::uint64_t>(f));
        auto params = init_network<Real>(net_config, derive_seed(fold_config.seed, 0x11));
        train(params, train_images, fold_config, net_config);

        std::vector<double> fold_scores;
        std::vector<int> fold_labels;
        for (int idx : split.folds[static_cast<std::size_t>(f)]) {
            const auto& s = samples[static_cast<std::size_t>(idx)];
            const double score = score_sample(params, s, stats, net_config);
            result.oof_scores[static_cast<std::size_t>(idx)] = score;
            result.oof_labels[static_cast<std::size_t>(idx)] = s.label;
            result.fold_of[static_cast<std::size_t>(idx)] = f;
            fold_scores.push_back(score);
            fold_labels.push_back(s.label);
        }
        result.per_fold.push_back(evaluate_metrics(fold_scores, fold_labels));
    }
    result.pooled = evaluate_metrics(result.oof_scores, result.oof_labels);
    return result;
}

}  // namespace gdnet
