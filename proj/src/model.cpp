#include "squanv/model.hpp"

#include "squanv/error.hpp"
#include "squanv/parallel.hpp"
#include "squanv/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace squanv {

void ModelSpec::validate() const {
    require(n_qubits >= 2 && n_qubits <= kMaxQubits, "n_qubits out of range");
    require(kernel_h >= 1 && kernel_w >= 1, "kernel dimensions must be positive");
    require(stride >= 1, "stride must be positive");
    require(n_blocks >= 1, "n_blocks must be positive");
    require(n_filters >= 1, "n_filters must be positive");
    require(classes >= 2, "need at least two classes");
    require(image_h >= kernel_h && image_w >= kernel_w,
            "image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                " smaller than kernel");
    if (pool) {
        require(grid_rows() >= 2 && grid_cols() >= 2,
                "pooling needs a feature map of at least 2x2");
    }
}

SqcnnModel SqcnnModel::create(const ModelSpec &spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, 0x1417));
    SqcnnModel m{spec,
                 {build_squanv_template(spec.n_qubits, spec.kernel_h, spec.kernel_w,
                                        spec.n_blocks),
                  {}},
                 {}};
    for (int l = 0; l < spec.n_filters; ++l) {
        ParamVector p(static_cast<std::size_t>(m.bank.tmpl.n_params()));
        for (auto &v : p) {
            v = rng.uniform(-std::numbers::pi, std::numbers::pi);
        }
        m.bank.params.push_back(std::move(p));
    }
    const int d = spec.feature_dim();
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    m.head.classes = spec.classes;
    m.head.inputs = d;
    m.head.weights.resize(static_cast<std::size_t>(spec.classes) * d);
    for (auto &w : m.head.weights) {
        w = rng.uniform(-bound, bound);
    }
    m.head.bias.resize(static_cast<std::size_t>(spec.classes));
    for (auto &b : m.head.bias) {
        b = rng.uniform(-bound, bound);
    }
    return m;
}

void SqcnnModel::validate() const {
    spec.validate();
    bank.validate();
    require(bank.n_filters() == spec.n_filters, "filter count disagrees with spec");
    require(bank.tmpl.n_qubits() == spec.n_qubits, "template qubits disagree with spec");
    require(bank.tmpl.data_arity() == spec.kernel_h * spec.kernel_w,
            "template arity disagrees with kernel");
    require(head.inputs == spec.feature_dim(),
            "head expects " + std::to_string(head.inputs) + " inputs but geometry gives " +
                std::to_string(spec.feature_dim()));
    require(head.classes == spec.classes, "head class count disagrees with spec");
    require(head.weights.size() == static_cast<std::size_t>(head.classes) * head.inputs &&
                head.bias.size() == static_cast<std::size_t>(head.classes),
            "head buffers have the wrong size");
}

std::vector<double> head_inputs(const ModelSpec &spec, const FeatureTensor &f) {
    if (!spec.pool) {
        return f.values;
    }
    const int hr = f.height / 2;
    const int hc = f.width / 2;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(f.channels) * hr * hc);
    for (int c = 0; c < f.channels; ++c) {
        for (int i = 0; i < hr; ++i) {
            for (int j = 0; j < hc; ++j) {
                out.push_back((f.at(c, 2 * i, 2 * j) + f.at(c, 2 * i, 2 * j + 1) +
                               f.at(c, 2 * i + 1, 2 * j) + f.at(c, 2 * i + 1, 2 * j + 1)) /
                              4);
            }
        }
    }
    return out;
}

std::vector<double> softmax(std::span<const double> z) {
    require(!z.empty(), "softmax of an empty vector");
    const double top = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
        p[c] = std::exp(z[c] - top);
        sum += p[c];
    }
    for (auto &v : p) {
        v /= sum;
    }
    return p;
}

std::vector<double> logits(const DenseHead &head, std::span<const double> x) {
    require(x.size() == static_cast<std::size_t>(head.inputs),
            "head expects " + std::to_string(head.inputs) + " inputs, got " +
                std::to_string(x.size()));
    std::vector<double> z(head.bias);
    for (int c = 0; c < head.classes; ++c) {
        const double *row = head.weights.data() + static_cast<std::size_t>(c) * head.inputs;
        double acc = 0.0;
        for (int k = 0; k < head.inputs; ++k) {
            acc += row[k] * x[k];
        }
        z[c] += acc;
    }
    return z;
}

namespace {

FeatureTensor quanvolve(const SqcnnModel &model, const PatchGrid &grid) {
    return forward(model.bank, grid, false).features;
}

PatchGrid patches_for(const SqcnnModel &model, const ImageView &image) {
    require(image.height == model.spec.image_h && image.width == model.spec.image_w,
            "image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                ", model expects " + std::to_string(model.spec.image_h) + "x" +
                std::to_string(model.spec.image_w));
    return extract_patches(image, model.spec.kernel_h, model.spec.kernel_w,
                           model.spec.stride);
}

std::vector<int> rf_sample(const LossOptions &options, int n_patches) {
    if (!options.rf_patches.empty()) {
        for (const int p : options.rf_patches) {
            require(p >= 0 && p < n_patches, "rf patch index out of range");
        }
        return options.rf_patches;
    }
    std::vector<int> all(static_cast<std::size_t>(n_patches));
    std::iota(all.begin(), all.end(), 0);
    return all;
}

void check_label(const SqcnnModel &model, int label) {
    require(label >= 0 && label < model.head.classes,
            "label " + std::to_string(label) + " out of range");
}

} // namespace

std::vector<double> predict(const SqcnnModel &model, const ImageView &image) {
    model.validate();
    const auto grid = patches_for(model, image);
    return softmax(logits(model.head, head_inputs(model.spec, quanvolve(model, grid))));
}

int argmax(std::span<const double> v) {
    require(!v.empty(), "argmax of an empty vector");
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double cross_entropy(std::span<const double> probabilities, int label) {
    require(label >= 0 && static_cast<std::size_t>(label) < probabilities.size(),
            "label out of range");
    return -std::log(std::max(probabilities[label], kProbabilityFloor));
}

double rf_loss(double mean_fidelity, RfMode mode) {
    return mode == RfMode::AsWritten ? 1.0 - mean_fidelity : mean_fidelity;
}

double rf_loss_slope(RfMode mode) { return mode == RfMode::AsWritten ? -1.0 : 1.0; }

LossBreakdown total_loss(double ce_batch_mean, double rf_batch_mean, double lambda) {
    require(lambda >= 0.0, "lambda must be non-negative");
    return {ce_batch_mean, rf_batch_mean, ce_batch_mean + lambda * rf_batch_mean, lambda};
}

ModelGradient ModelGradient::zeros_like(const SqcnnModel &model) {
    ModelGradient g;
    g.head_weights.assign(model.head.weights.size(), 0.0);
    g.head_bias.assign(model.head.bias.size(), 0.0);
    for (const auto &p : model.bank.params) {
        g.filters.emplace_back(p.size(), 0.0);
    }
    return g;
}

void ModelGradient::accumulate(const ModelGradient &o) {
    for (std::size_t k = 0; k < head_weights.size(); ++k) {
        head_weights[k] += o.head_weights[k];
    }
    for (std::size_t k = 0; k < head_bias.size(); ++k) {
        head_bias[k] += o.head_bias[k];
    }
    for (std::size_t l = 0; l < filters.size(); ++l) {
        for (std::size_t j = 0; j < filters[l].size(); ++j) {
            filters[l][j] += o.filters[l][j];
        }
    }
}

void ModelGradient::scale(double f) {
    for (auto &v : head_weights) {
        v *= f;
    }
    for (auto &v : head_bias) {
        v *= f;
    }
    for (auto &p : filters) {
        for (auto &v : p) {
            v *= f;
        }
    }
}

LossBreakdown example_loss(const SqcnnModel &model, const ImageView &image, int label,
                           const LossOptions &options) {
    model.validate();
    check_label(model, label);
    const bool multi = model.bank.n_filters() >= 2;
    require(multi || options.lambda == 0.0, "lambda > 0 requires at least two filters");

    const auto grid = patches_for(model, image);
    const auto out = forward(model.bank, grid, multi);
    const auto p = softmax(logits(model.head, head_inputs(model.spec, out.features)));
    const double ce = cross_entropy(p, label);
    double rf = 0.0;
    if (multi) {
        const auto sample = rf_sample(options, grid.count());
        rf = rf_loss(mean_pairwise_fidelity(out.states, sample), options.rf_mode);
    }
    return total_loss(ce, rf, options.lambda);
}

BackwardResult backward(const SqcnnModel &model, const ImageView &image, int label,
                        const BackwardOptions &options) {
    model.validate();
    check_label(model, label);
    const auto &spec = model.spec;
    const auto &tmpl = model.bank.tmpl;
    const int nf = model.bank.n_filters();
    const int nq = tmpl.n_qubits();
    const bool multi = nf >= 2;
    require(multi || options.lambda == 0.0, "lambda > 0 requires at least two filters");

    const auto grid = patches_for(model, image);
    const int np = grid.count();
    const auto out = forward(model.bank, grid, multi);
    const auto x = head_inputs(spec, out.features);
    const auto p = softmax(logits(model.head, x));

    BackwardResult result{ModelGradient::zeros_like(model), {}};
    auto &g = result.grad;

    // Softmax-CE: dL/dz = p - onehot(label); zero when the floor is active.
    std::vector<double> dz(p);
    if (p[label] > kProbabilityFloor) {
        dz[label] -= 1.0;
    } else {
        std::fill(dz.begin(), dz.end(), 0.0);
    }
    const int d = model.head.inputs;
    std::vector<double> dx(static_cast<std::size_t>(d), 0.0);
    for (int c = 0; c < model.head.classes; ++c) {
        g.head_bias[c] = dz[c];
        const double *row = model.head.weights.data() + static_cast<std::size_t>(c) * d;
        double *grow = g.head_weights.data() + static_cast<std::size_t>(c) * d;
        for (int k = 0; k < d; ++k) {
            grow[k] = dz[c] * x[k];
            dx[k] += dz[c] * row[k];
        }
    }

    // Undo pooling: each pooled cell spreads a quarter to its 2x2 window.
    FeatureTensor dfeat{out.features.channels, out.features.height, out.features.width,
                        std::vector<double>(out.features.values.size(), 0.0)};
    if (spec.pool) {
        const int hr = spec.head_rows();
        const int hc = spec.head_cols();
        for (int c = 0; c < dfeat.channels; ++c) {
            for (int i = 0; i < hr; ++i) {
                for (int j = 0; j < hc; ++j) {
                    const double v =
                        dx[(static_cast<std::size_t>(c) * hr + i) * hc + j] / 4;
                    dfeat.at(c, 2 * i, 2 * j) = v;
                    dfeat.at(c, 2 * i, 2 * j + 1) = v;
                    dfeat.at(c, 2 * i + 1, 2 * j) = v;
                    dfeat.at(c, 2 * i + 1, 2 * j + 1) = v;
                }
            }
        }
    } else {
        dfeat.values = dx;
    }

    // Chain dL/d<Z_q> into each (filter, patch) circuit.
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(nf) * np);
    parallel_for(partial.size(), [&](std::size_t task) {
        const int l = static_cast<int>(task / np);
        const int pi = static_cast<int>(task % np);
        std::vector<double> cot(static_cast<std::size_t>(nq));
        for (int q = 0; q < nq; ++q) {
            cot[q] = dfeat.at(l * nq + q, pi / grid.cols, pi % grid.cols);
        }
        const auto patch = template_patch(tmpl, grid, pi, ArityPolicy::Strict);
        if (options.grad_mode == GradMode::Adjoint) {
            partial[task] = vjp_expectation_adjoint(tmpl, model.bank.params[l], patch, cot);
        } else {
            const auto jac =
                grad_expectation_paramshift(tmpl, model.bank.params[l], patch, options.shift);
            std::vector<double> v(static_cast<std::size_t>(tmpl.n_params()), 0.0);
            for (int j = 0; j < tmpl.n_params(); ++j) {
                for (int q = 0; q < nq; ++q) {
                    v[j] += jac(j, q) * cot[q];
                }
            }
            partial[task] = std::move(v);
        }
    });
    for (std::size_t task = 0; task < partial.size(); ++task) {
        auto &dst = g.filters[task / np];
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += partial[task][j];
        }
    }

    const double ce = cross_entropy(p, label);
    double rf = 0.0;
    if (multi) {
        const auto sample = rf_sample(options, np);
        rf = rf_loss(mean_pairwise_fidelity(out.states, sample), options.rf_mode);

        if (options.lambda != 0.0) {
            // d meanPhi / d theta over unordered pairs; fidelity gradients
            // always use the parameter-shift rule.
            std::vector<std::pair<int, int>> pairs;
            for (int l = 0; l < nf; ++l) {
                for (int m = l + 1; m < nf; ++m) {
                    pairs.emplace_back(l, m);
                }
            }
            const double coeff = options.lambda * rf_loss_slope(options.rf_mode) /
                                 static_cast<double>(sample.size() * pairs.size());
            std::vector<FidelityGradient> fg(sample.size() * pairs.size());
            parallel_for(fg.size(), [&](std::size_t task) {
                const auto [l, m] = pairs[task % pairs.size()];
                const auto patch = template_patch(tmpl, grid, sample[task / pairs.size()],
                                                  ArityPolicy::Strict);
                fg[task] = grad_fidelity_paramshift(tmpl, model.bank.params[l],
                                                    model.bank.params[m], patch,
                                                    options.shift);
            });
            for (std::size_t task = 0; task < fg.size(); ++task) {
                const auto [l, m] = pairs[task % pairs.size()];
                for (std::size_t j = 0; j < g.filters[l].size(); ++j) {
                    g.filters[l][j] += coeff * fg[task].grad_a[j];
                    g.filters[m][j] += coeff * fg[task].grad_b[j];
                }
            }
        }
    }
    result.loss = total_loss(ce, rf, options.lambda);
    return result;
}

} // namespace squanv
