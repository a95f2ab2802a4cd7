#pragma once

#include "squanv/data.hpp"
#include "squanv/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace squanv {

struct TrainConfig {
    int epochs = 15;
    int batch_size = 16;
    double learning_rate = 1e-4;
    double lambda = 0.0;
    RfMode rf_mode = RfMode::Diversity;
    GradMode grad_mode = GradMode::Adjoint;
    int rf_patch_samples = 4; // 0 = every patch
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Throws ConfigError on E < 1, batch < 1, lr <= 0, lambda < 0, or
    /// lambda > 0 with fewer than two filters.
    void validate(int n_filters) const;
};

struct AdamHyper {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update at step t >= 1.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamMoments &moments, const AdamHyper &hyper, long t);

/// Model plus optimizer state; everything a checkpoint has to restore.
struct TrainState {
    SqcnnModel model;
    std::vector<AdamMoments> moments; // filters..., head weights, head bias
    long step = 0;
    int epoch = 0;

    static TrainState fresh(SqcnnModel model);
};

struct EpochRecord {
    int epoch = 0;
    double loss_ce = 0.0;
    double loss_rf = 0.0;
    double loss_total = 0.0;
    double top1_train = 0.0;
    double top1_test = 0.0;
    double feat_euclid_dist = 0.0; // NaN with a single filter

    friend bool operator==(const EpochRecord &, const EpochRecord &) = default;
};

struct RunMetrics {
    std::vector<EpochRecord> epochs;
};

/// Per-minibatch losses in the order they were computed.
struct StepRecord {
    int epoch = 0;
    std::vector<int> batch;
    std::vector<std::vector<int>> rf_patches;
    LossBreakdown loss;
};

using EpochCallback = std::function<void(const EpochRecord &, const TrainState &)>;
/// Invoked after a minibatch loss is computed and before the update.
using StepCallback = std::function<void(const StepRecord &, const TrainState &)>;

/**
 * Minibatch Adam over CE + lambda * RF for config.epochs epochs, one update
 * per minibatch. Shuffling and fidelity patch sampling are drawn from the
 * run seed on the calling thread, and per-example gradients are summed in
 * batch order, so results do not depend on the worker count.
 * Throws DivergenceError on a non-finite loss.
 */
RunMetrics rf_train(const TrainConfig &config, const ImageDataset &train,
                    const ImageDataset &test, TrainState &state,
                    const EpochCallback &on_epoch = {}, const StepCallback &on_step = {});

/// 100 * fraction of examples whose argmax prediction equals the label.
double top1_accuracy(const SqcnnModel &model, const ImageDataset &split);

/**
 * Mean over images and unordered filter pairs of ||f_l - f_l'||_2 / sqrt(n)
 * where f_l is filter l's flattened feature block of length n.
 */
double feature_euclid_distance(const SqcnnModel &model, const ImageDataset &split);

struct SplitScores {
    double top1 = 0.0;
    double feat_euclid_dist = 0.0;
};

/// Both metrics from one quanvolution pass per image.
SplitScores score_split(const SqcnnModel &model, const ImageDataset &split);

} // namespace squanv
