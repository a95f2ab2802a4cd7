#include "squanv/quanv.hpp"

#include "squanv/error.hpp"
#include "squanv/parallel.hpp"

#include <optional>
#include <string>

namespace squanv {

PatchGrid extract_patches(const ImageView &image, int kernel_h, int kernel_w,
                          int stride) {
    require(kernel_h >= 1 && kernel_w >= 1, "kernel dimensions must be positive");
    require(stride >= 1, "stride must be positive");
    require(image.height >= kernel_h && image.width >= kernel_w,
            "image " + std::to_string(image.height) + "x" +
                std::to_string(image.width) + " is smaller than kernel " +
                std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
    require(image.pixels.size() ==
                static_cast<std::size_t>(image.height) * image.width,
            "image buffer does not match its dimensions");

    PatchGrid grid;
    grid.rows = window_count(image.height, kernel_h, stride);
    grid.cols = window_count(image.width, kernel_w, stride);
    grid.kernel_h = kernel_h;
    grid.kernel_w = kernel_w;
    grid.stride = stride;
    grid.values.reserve(static_cast<std::size_t>(grid.count()) * grid.arity());
    for (int i = 0; i < grid.rows; ++i) {
        for (int j = 0; j < grid.cols; ++j) {
            for (int di = 0; di < kernel_h; ++di) {
                for (int dj = 0; dj < kernel_w; ++dj) {
                    grid.values.push_back(image.at(i * stride + di, j * stride + dj));
                }
            }
        }
    }
    return grid;
}

void FilterBank::validate() const {
    require(!params.empty(), "filter bank needs at least one filter");
    for (const auto &p : params) {
        require(p.size() == static_cast<std::size_t>(tmpl.n_params()),
                "filter parameter count does not match the template");
    }
}

std::vector<double> template_patch(const CircuitTemplate &tmpl, const PatchGrid &grid,
                                   int index, ArityPolicy policy) {
    const auto raw = grid.patch(index);
    if (grid.arity() == tmpl.data_arity()) {
        return {raw.begin(), raw.end()};
    }
    require(policy == ArityPolicy::Cycle,
            "patch arity " + std::to_string(grid.arity()) +
                " does not match template data arity " +
                std::to_string(tmpl.data_arity()));
    std::vector<double> out(static_cast<std::size_t>(tmpl.data_arity()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = raw[i % raw.size()];
    }
    return out;
}

QuanvOutput forward(const FilterBank &bank, const PatchGrid &grid, bool keep_states,
                    ArityPolicy policy) {
    bank.validate();
    const int nf = bank.n_filters();
    const int nq = bank.tmpl.n_qubits();
    const int np = grid.count();

    QuanvOutput out;
    out.features.channels = nf * nq;
    out.features.height = grid.rows;
    out.features.width = grid.cols;
    out.features.values.assign(
        static_cast<std::size_t>(out.features.channels) * np, 0.0);

    std::vector<std::vector<double>> patches(static_cast<std::size_t>(np));
    for (int p = 0; p < np; ++p) {
        patches[p] = template_patch(bank.tmpl, grid, p, policy);
    }

    std::vector<std::optional<StateVector>> kept;
    if (keep_states) {
        kept.resize(static_cast<std::size_t>(nf) * np);
    }

    parallel_for(static_cast<std::size_t>(nf) * np, [&](std::size_t task) {
        const int l = static_cast<int>(task / np);
        const int p = static_cast<int>(task % np);
        auto eval = evaluate(bank.tmpl, bank.params[l], patches[p]);
        for (int q = 0; q < nq; ++q) {
            out.features.at(l * nq + q, p / grid.cols, p % grid.cols) = eval.features[q];
        }
        if (keep_states) {
            kept[task] = std::move(eval.state);
        }
    });

    if (keep_states) {
        out.states.resize(static_cast<std::size_t>(nf));
        for (int l = 0; l < nf; ++l) {
            out.states[l].reserve(static_cast<std::size_t>(np));
            for (int p = 0; p < np; ++p) {
                out.states[l].push_back(std::move(*kept[static_cast<std::size_t>(l) * np + p]));
            }
        }
    }
    return out;
}

double mean_pairwise_fidelity(const std::vector<std::vector<StateVector>> &states,
                              std::span<const int> patch_sample) {
    const auto nf = states.size();
    require(nf >= 2, "pairwise fidelity needs at least two filters");
    require(!patch_sample.empty(), "patch sample must be non-empty");

    double total = 0.0;
    for (const int p : patch_sample) {
        double acc = 0.0;
        for (std::size_t l = 0; l < nf; ++l) {
            require(p >= 0 && static_cast<std::size_t>(p) < states[l].size(),
                    "patch index " + std::to_string(p) + " out of range");
            for (std::size_t m = l + 1; m < nf; ++m) {
                acc += overlap_fidelity(states[l][p], states[m][p]);
            }
        }
        total += acc / static_cast<double>(nf * (nf - 1) / 2);
    }
    return total / static_cast<double>(patch_sample.size());
}

} // namespace squanv
