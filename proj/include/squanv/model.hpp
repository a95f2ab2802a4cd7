#pragma once

#include "squanv/circuits.hpp"
#include "squanv/quanv.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace squanv {

/// Everything needed to rebuild an sQCNN's shape.
struct ModelSpec {
    int image_h = 14;
    int image_w = 14;
    int n_qubits = 4;
    int kernel_h = 2;
    int kernel_w = 2;
    int stride = 2;
    int n_blocks = 4;
    int n_filters = 2;
    int classes = 10;
    bool pool = false; // 2x2 average pooling between quanvolution and head

    void validate() const;
    [[nodiscard]] int grid_rows() const { return window_count(image_h, kernel_h, stride); }
    [[nodiscard]] int grid_cols() const { return window_count(image_w, kernel_w, stride); }
    [[nodiscard]] int head_rows() const { return pool ? grid_rows() / 2 : grid_rows(); }
    [[nodiscard]] int head_cols() const { return pool ? grid_cols() / 2 : grid_cols(); }
    /// Head input width D = n_f * n_q * H'' * W''.
    [[nodiscard]] int feature_dim() const {
        return n_filters * n_qubits * head_rows() * head_cols();
    }

    friend bool operator==(const ModelSpec &, const ModelSpec &) = default;
};

/// Fully connected softmax layer; weights are row-major [classes x inputs].
struct DenseHead {
    int classes = 0;
    int inputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

struct SqcnnModel {
    ModelSpec spec;
    FilterBank bank;
    DenseHead head;

    /// Filters uniform in [-pi, pi], head uniform in [-1/sqrt(D), 1/sqrt(D)].
    static SqcnnModel create(const ModelSpec &spec, std::uint64_t seed);

    /// Checks that bank and head agree with `spec`.
    void validate() const;
};

/// Pooled, flattened head input for one feature tensor (channel-major).
std::vector<double> head_inputs(const ModelSpec &spec, const FeatureTensor &features);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

std::vector<double> logits(const DenseHead &head, std::span<const double> inputs);

std::vector<double> predict(const SqcnnModel &model, const ImageView &image);

/// Index of the largest probability; ties go to the lowest index.
int argmax(std::span<const double> values);

inline constexpr double kProbabilityFloor = 1e-12;

/// -log(max(p[label], 1e-12)).
double cross_entropy(std::span<const double> probabilities, int label);

/// How the mean pairwise fidelity enters the loss.
enum class RfMode {
    AsWritten, // 1 - mean fidelity
    Diversity, // mean fidelity, so minimizing pushes filters apart
};

double rf_loss(double mean_fidelity, RfMode mode);

/// d rf_loss / d mean_fidelity.
double rf_loss_slope(RfMode mode);

struct LossBreakdown {
    double ce = 0.0;
    double rf = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

/// total = ce + lambda * rf, with ce and rf already minibatch means.
LossBreakdown total_loss(double ce_batch_mean, double rf_batch_mean, double lambda);

enum class GradMode { ParamShift, Adjoint };

struct ModelGradient {
    std::vector<double> head_weights;
    std::vector<double> head_bias;
    std::vector<ParamVector> filters;

    static ModelGradient zeros_like(const SqcnnModel &model);
    void accumulate(const ModelGradient &other);
    void scale(double factor);
};

struct LossOptions {
    double lambda = 0.0;
    RfMode rf_mode = RfMode::Diversity;
    /// Row-major patch indices entering the fidelity term; empty = all.
    std::vector<int> rf_patches;
};

struct BackwardOptions : LossOptions {
    GradMode grad_mode = GradMode::Adjoint;
    double shift = kParamShift;
};

struct BackwardResult {
    ModelGradient grad;
    LossBreakdown loss;
};

/// Per-example CE + lambda * RF. The fidelity term is only evaluated when
/// the bank has two or more filters; with lambda = 0 it is reported but never
/// differentiated.
LossBreakdown example_loss(const SqcnnModel &model, const ImageView &image, int label,
                           const LossOptions &options);

/**
 * Loss and exact gradients for one example. Head gradients come from
 * softmax-CE backprop; filter gradients chain dL/d<Z> into the circuit
 * derivatives (adjoint or parameter-shift), plus lambda times the
 * parameter-shift gradient of the sampled pairwise fidelity.
 */
BackwardResult backward(const SqcnnModel &model, const ImageView &image, int label,
                        const BackwardOptions &options);

} // namespace squanv
