#include "squanv/gradcheck.hpp"

#include "squanv/model.hpp"
#include "squanv/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace squanv {

bool GradcheckReport::passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradcheckEntry &e) { return e.passed; });
}

namespace {

constexpr double kFdStep = 1e-5;

ParamVector random_params(Rng &rng, int n) {
    ParamVector p(static_cast<std::size_t>(n));
    for (auto &v : p) {
        v = rng.uniform(-std::numbers::pi, std::numbers::pi);
    }
    return p;
}

std::vector<double> random_patch(Rng &rng, int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    for (auto &v : p) {
        v = rng.uniform();
    }
    return p;
}

template <class F> double central_difference(ParamVector &x, int j, F &&f) {
    const double saved = x[j];
    x[j] = saved + kFdStep;
    const double plus = f();
    x[j] = saved - kFdStep;
    const double minus = f();
    x[j] = saved;
    return (plus - minus) / (2 * kFdStep);
}

GradcheckEntry finish(std::string name, double dev, double tol) {
    return {std::move(name), dev, tol, std::isfinite(dev) && dev < tol};
}

} // namespace

GradcheckReport run_gradcheck(const GradcheckOptions &options) {
    const auto tmpl = build_squanv_template(4, 2, 2, 4);
    const int np = tmpl.n_params();
    const int nq = tmpl.n_qubits();
    Rng rng(mix_seed(options.seed, 0x96c));

    double dev_expect = 0.0;
    double dev_fid = 0.0;
    double dev_adjoint = 0.0;
    for (int d = 0; d < options.draws; ++d) {
        auto theta = random_params(rng, np);
        auto phi = random_params(rng, np);
        const auto patch = random_patch(rng, tmpl.data_arity());

        const auto shift = grad_expectation_paramshift(tmpl, theta, patch, options.shift);
        const auto adjoint = grad_expectation_adjoint(tmpl, theta, patch);
        for (int j = 0; j < np; ++j) {
            for (int q = 0; q < nq; ++q) {
                const double fd = central_difference(
                    theta, j, [&] { return evaluate(tmpl, theta, patch).features[q]; });
                dev_expect = std::max(dev_expect, std::abs(shift(j, q) - fd));
                dev_adjoint = std::max(dev_adjoint, std::abs(shift(j, q) - adjoint(j, q)));
            }
        }

        const auto fg = grad_fidelity_paramshift(tmpl, theta, phi, patch, options.shift);
        for (int j = 0; j < np; ++j) {
            const double fa = central_difference(
                theta, j, [&] { return filter_fidelity(tmpl, theta, phi, patch); });
            const double fb = central_difference(
                phi, j, [&] { return filter_fidelity(tmpl, theta, phi, patch); });
            dev_fid = std::max({dev_fid, std::abs(fg.grad_a[j] - fa), std::abs(fg.grad_b[j] - fb)});
        }
    }

    // End-to-end: 6x6 image, 2x2 kernel, stride 2, two filters, RF term on.
    ModelSpec spec;
    spec.image_h = 6;
    spec.image_w = 6;
    spec.n_filters = 2;
    spec.classes = 3;
    auto model = SqcnnModel::create(spec, options.seed);
    const auto pixels = random_patch(rng, 36);
    const ImageView image{pixels, 6, 6};
    const int label = static_cast<int>(rng.index(3));

    double dev_model = 0.0;
    for (const auto mode : {GradMode::Adjoint, GradMode::ParamShift}) {
        BackwardOptions opt;
        opt.lambda = 0.5;
        opt.rf_mode = RfMode::Diversity;
        opt.grad_mode = mode;
        opt.shift = options.shift;
        const auto analytic = backward(model, image, label, opt);
        auto loss = [&] { return example_loss(model, image, label, opt).total; };

        for (int k = 0; k < 10; ++k) {
            const int l = static_cast<int>(rng.index(2));
            const int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(np)));
            const double fd = central_difference(model.bank.params[l], j, loss);
            dev_model = std::max(dev_model, std::abs(analytic.grad.filters[l][j] - fd));

            const int w = static_cast<int>(rng.index(model.head.weights.size()));
            const double fw = central_difference(model.head.weights, w, loss);
            dev_model = std::max(dev_model, std::abs(analytic.grad.head_weights[w] - fw));
        }
    }

    GradcheckReport report;
    report.entries.push_back(finish("expectation: parameter-shift vs finite difference", dev_expect, 1e-6));
    report.entries.push_back(finish("fidelity: parameter-shift vs finite difference", dev_fid, 1e-6));
    report.entries.push_back(finish("expectation: adjoint vs parameter-shift", dev_adjoint, 1e-9));
    report.entries.push_back(finish("model: backward vs finite difference", dev_model, 1e-5));
    return report;
}

} // namespace squanv
