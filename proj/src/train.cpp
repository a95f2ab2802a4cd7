#include "squanv/train.hpp"

#include "squanv/error.hpp"
#include "squanv/parallel.hpp"
#include "squanv/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace squanv {

void TrainConfig::validate(int n_filters) const {
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(learning_rate > 0.0, "learning_rate must be > 0");
    require(lambda >= 0.0, "lambda must be >= 0");
    require(rf_patch_samples >= 0, "rf_patch_samples must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
    require(epsilon > 0.0, "Adam epsilon must be > 0");
    require(lambda == 0.0 || n_filters >= 2,
            "lambda > 0 needs at least two filters (got " + std::to_string(n_filters) + ")");
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamMoments &mom, const AdamHyper &h, long t) {
    require(params.size() == grads.size() && mom.m.size() == params.size() &&
                mom.v.size() == params.size(),
            "Adam buffers have mismatched sizes");
    require(t >= 1, "Adam step counter starts at 1");
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        mom.m[k] = h.beta1 * mom.m[k] + (1.0 - h.beta1) * grads[k];
        mom.v[k] = h.beta2 * mom.v[k] + (1.0 - h.beta2) * grads[k] * grads[k];
        const double m_hat = mom.m[k] / c1;
        const double v_hat = mom.v[k] / c2;
        params[k] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
}

TrainState TrainState::fresh(SqcnnModel model) {
    TrainState s{std::move(model), {}, 0, 0};
    for (const auto &p : s.model.bank.params) {
        s.moments.emplace_back(p.size());
    }
    s.moments.emplace_back(s.model.head.weights.size());
    s.moments.emplace_back(s.model.head.bias.size());
    return s;
}

SplitScores score_split(const SqcnnModel &model, const ImageDataset &split) {
    model.validate();
    require(split.count > 0, "cannot score an empty split");
    const int nf = model.bank.n_filters();
    std::vector<int> correct(static_cast<std::size_t>(split.count), 0);
    std::vector<double> dist(static_cast<std::size_t>(split.count), 0.0);

    parallel_for(static_cast<std::size_t>(split.count), [&](std::size_t n) {
        const auto image = split.image(static_cast<int>(n));
        const auto grid = extract_patches(image, model.spec.kernel_h, model.spec.kernel_w,
                                          model.spec.stride);
        const auto features = forward(model.bank, grid, false).features;
        const auto p = softmax(logits(model.head, head_inputs(model.spec, features)));
        correct[n] = argmax(p) == split.labels[n] ? 1 : 0;
        if (nf >= 2) {
            const std::size_t block = features.values.size() / static_cast<std::size_t>(nf);
            double acc = 0.0;
            int pairs = 0;
            for (int l = 0; l < nf; ++l) {
                for (int m = l + 1; m < nf; ++m) {
                    const double *a = features.values.data() + l * block;
                    const double *b = features.values.data() + m * block;
                    double sq = 0.0;
                    for (std::size_t k = 0; k < block; ++k) {
                        sq += (a[k] - b[k]) * (a[k] - b[k]);
                    }
                    acc += std::sqrt(sq / static_cast<double>(block));
                    ++pairs;
                }
            }
            dist[n] = acc / pairs;
        }
    });

    SplitScores s;
    s.top1 = 100.0 * std::accumulate(correct.begin(), correct.end(), 0) / split.count;
    if (nf >= 2) {
        double acc = 0.0;
        for (const double d : dist) {
            acc += d;
        }
        s.feat_euclid_dist = acc / split.count;
    } else {
        s.feat_euclid_dist = std::numeric_limits<double>::quiet_NaN();
    }
    return s;
}

double top1_accuracy(const SqcnnModel &model, const ImageDataset &split) {
    return score_split(model, split).top1;
}

double feature_euclid_distance(const SqcnnModel &model, const ImageDataset &split) {
    require(model.bank.n_filters() >= 2, "feature distance needs at least two filters");
    return score_split(model, split).feat_euclid_dist;
}

namespace {

std::vector<int> sample_patches(Rng &rng, int n_patches, int wanted) {
    std::vector<int> all(static_cast<std::size_t>(n_patches));
    std::iota(all.begin(), all.end(), 0);
    if (wanted == 0 || wanted >= n_patches) {
        return all;
    }
    // Partial Fisher-Yates: the first `wanted` slots are a uniform sample.
    for (int i = 0; i < wanted; ++i) {
        const auto k = i + static_cast<int>(rng.index(static_cast<std::uint64_t>(n_patches - i)));
        std::swap(all[i], all[k]);
    }
    all.resize(static_cast<std::size_t>(wanted));
    return all;
}

void check_finite(double v, const char *what, int epoch, long step) {
    if (!std::isfinite(v)) {
        throw DivergenceError(std::string(what) + " became non-finite at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step));
    }
}

} // namespace

RunMetrics rf_train(const TrainConfig &config, const ImageDataset &train,
                    const ImageDataset &test, TrainState &state,
                    const EpochCallback &on_epoch, const StepCallback &on_step) {
    auto &model = state.model;
    model.validate();
    config.validate(model.bank.n_filters());
    require(train.count > 0 && test.count > 0, "train and test splits must be non-empty");
    require(train.height == model.spec.image_h && train.width == model.spec.image_w,
            "train images do not match the model geometry");
    require(train.num_classes() <= model.spec.classes && test.num_classes() <= model.spec.classes,
            "dataset has more classes than the model head");

    const bool multi = model.bank.n_filters() >= 2;
    const int n_patches = model.spec.grid_rows() * model.spec.grid_cols();
    const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.epsilon};

    RunMetrics metrics;
    std::vector<int> order(static_cast<std::size_t>(train.count));
    for (int e = 0; e < config.epochs; ++e) {
        const int epoch = state.epoch + 1;
        // One stream per epoch so a run resumed from a checkpoint continues exactly.
        Rng rng(mix_seed(config.seed, 0x7a11 + static_cast<std::uint64_t>(epoch)));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span(order));

        double sum_ce = 0.0;
        double sum_rf = 0.0;
        double sum_total = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            StepRecord rec;
            rec.epoch = epoch;
            rec.batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
            for (std::size_t b = 0; b < rec.batch.size(); ++b) {
                rec.rf_patches.push_back(multi ? sample_patches(rng, n_patches,
                                                                config.rf_patch_samples)
                                               : std::vector<int>{});
            }

            std::vector<BackwardResult> results(rec.batch.size());
            parallel_for(rec.batch.size(), [&](std::size_t b) {
                BackwardOptions opt;
                opt.lambda = config.lambda;
                opt.rf_mode = config.rf_mode;
                opt.grad_mode = config.grad_mode;
                opt.rf_patches = rec.rf_patches[b];
                const int idx = rec.batch[b];
                results[b] = backward(model, train.image(idx), train.labels[idx], opt);
            });

            auto grad = ModelGradient::zeros_like(model);
            double ce = 0.0;
            double rf = 0.0;
            for (const auto &r : results) {
                grad.accumulate(r.grad);
                ce += r.loss.ce;
                rf += r.loss.rf;
            }
            const double inv = 1.0 / static_cast<double>(results.size());
            grad.scale(inv);
            rec.loss = total_loss(ce * inv, rf * inv, config.lambda);
            check_finite(rec.loss.total, "loss_total", epoch, state.step + 1);
            if (on_step) {
                on_step(rec, state);
            }

            ++state.step;
            const auto nf = static_cast<std::size_t>(model.bank.n_filters());
            for (std::size_t l = 0; l < nf; ++l) {
                adam_step(model.bank.params[l], grad.filters[l], state.moments[l], hyper,
                          state.step);
            }
            adam_step(model.head.weights, grad.head_weights, state.moments[nf], hyper,
                      state.step);
            adam_step(model.head.bias, grad.head_bias, state.moments[nf + 1], hyper,
                      state.step);

            sum_ce += rec.loss.ce;
            sum_rf += rec.loss.rf;
            sum_total += rec.loss.total;
            ++batches;
        }

        const auto train_scores = score_split(model, train);
        const auto test_scores = score_split(model, test);
        EpochRecord r{epoch,
                      sum_ce / batches,
                      sum_rf / batches,
                      sum_total / batches,
                      train_scores.top1,
                      test_scores.top1,
                      test_scores.feat_euclid_dist};
        state.epoch = epoch;
        metrics.epochs.push_back(r);
        if (on_epoch) {
            on_epoch(r, state);
        }
    }
    return metrics;
}

} // namespace squanv
