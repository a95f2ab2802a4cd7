#pragma once

#include "squanv/circuits.hpp"
#include "squanv/statevec.hpp"

#include <span>
#include <vector>

namespace squanv {

/// Read-only view of a row-major grayscale image with values in [0, 1].
struct ImageView {
    std::span<const double> pixels;
    int height = 0;
    int width = 0;

    [[nodiscard]] double at(int r, int c) const {
        return pixels[static_cast<std::size_t>(r) * width + c];
    }
};

/// Flattened sliding windows of an image, row-major over windows and
/// row-major within each window.
struct PatchGrid {
    int rows = 0;
    int cols = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    std::vector<double> values; // rows * cols * arity

    [[nodiscard]] int arity() const noexcept { return kernel_h * kernel_w; }
    [[nodiscard]] int count() const noexcept { return rows * cols; }
    [[nodiscard]] std::span<const double> patch(int index) const {
        return std::span(values).subspan(static_cast<std::size_t>(index) * arity(),
                                         static_cast<std::size_t>(arity()));
    }
    [[nodiscard]] std::span<const double> patch(int i, int j) const {
        return patch(i * cols + j);
    }
};

/// Output size of a valid (unpadded) sliding window along one axis.
[[nodiscard]] constexpr int window_count(int extent, int kernel, int stride) {
    return (extent - kernel) / stride + 1;
}

PatchGrid extract_patches(const ImageView &image, int kernel_h, int kernel_w,
                          int stride);

/// n_f quanvolutional filters sharing one circuit template.
struct FilterBank {
    CircuitTemplate tmpl;
    std::vector<ParamVector> params;

    [[nodiscard]] int n_filters() const noexcept {
        return static_cast<int>(params.size());
    }
    [[nodiscard]] int channels() const noexcept {
        return n_filters() * tmpl.n_qubits();
    }
    void validate() const;
};

/// Quanvolved features, [channels x height x width], filter-major channels:
/// channel l*n_q + q holds <Z_q> of filter l.
struct FeatureTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    double &at(int c, int i, int j) {
        return values[(static_cast<std::size_t>(c) * height + i) * width + j];
    }
    [[nodiscard]] double at(int c, int i, int j) const {
        return values[(static_cast<std::size_t>(c) * height + i) * width + j];
    }
};

/// Patch arity handling when the grid and template disagree.
enum class ArityPolicy {
    Strict, // mismatch is a ConfigError
    Cycle,  // template data index i reads patch value i mod arity
};

struct QuanvOutput {
    FeatureTensor features;
    /// Pre-measurement states indexed [filter][patch], row-major patches;
    /// empty unless requested.
    std::vector<std::vector<StateVector>> states;
};

QuanvOutput forward(const FilterBank &bank, const PatchGrid &grid, bool keep_states,
                    ArityPolicy policy = ArityPolicy::Strict);

/// The patch fed to the template for grid cell `index` under `policy`.
std::vector<double> template_patch(const CircuitTemplate &tmpl, const PatchGrid &grid,
                                   int index, ArityPolicy policy);

/**
 * Mean over the sampled patches of the mean fidelity over ordered filter
 * pairs (l, l'), l != l'. Since fidelity is symmetric this equals the mean
 * over unordered pairs. `patch_sample` holds row-major patch indices.
 */
double mean_pairwise_fidelity(const std::vector<std::vector<StateVector>> &states,
                              std::span<const int> patch_sample);

} // namespace squanv
