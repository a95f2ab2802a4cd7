#include "dense_oracle.hpp"

#include "squanv/circuits.hpp"
#include "squanv/error.hpp"
#include "squanv/random.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <numbers>

using namespace squanv;
using Catch::Matchers::WithinAbs;

namespace {

ParamVector random_params(Rng &rng, int n) {
    ParamVector p(static_cast<std::size_t>(n));
    for (auto &v : p) v = rng.uniform(-std::numbers::pi, std::numbers::pi);
    return p;
}

std::vector<double> random_patch(Rng &rng, int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    for (auto &v : p) v = rng.uniform();
    return p;
}

// Single-qubit RY(theta)|0>, theta trainable.
CircuitTemplate ry_template() {
    return {1, 1, 0, {{GateType::RY, 0, -1, AngleSource::param(0)}}};
}

double central(const std::function<double(double)> &f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2 * h);
}

} // namespace

TEST_CASE("template parameter counts", "[circuits]") {
    const auto t = build_squanv_template(4, 2, 2, 4);
    CHECK(t.n_params() == 48);
    CHECK(t.data_arity() == 4);
    CHECK(t.n_qubits() == 4);

    const auto big = build_squanv_template(16, 4, 4, 1);
    CHECK(big.n_params() == 48);
    CHECK(big.data_arity() == 16);

    const auto small = build_squanv_template(4, 1, 1, 1);
    CHECK(small.n_params() == 12);
    CHECK(small.data_arity() == 1);

    // Two uploads when the patch is larger than the register.
    const auto reup = build_squanv_template(4, 3, 3, 2);
    CHECK(reup.data_arity() == 9);
    CHECK(reup.n_params() == 3 * 2 * 3 * 4);

    CHECK_THROWS_AS(build_squanv_template(1, 2, 2, 1), ConfigError);
    CHECK_THROWS_AS(build_squanv_template(4, 0, 2, 1), ConfigError);
    CHECK_THROWS_AS(build_squanv_template(4, 2, 2, 0), ConfigError);
}

TEST_CASE("template invariants are enforced", "[circuits]") {
    using K = GateType;
    // Parameter used twice.
    CHECK_THROWS_AS(CircuitTemplate(1, 1, 0,
                                    {{K::RX, 0, -1, AngleSource::param(0)},
                                     {K::RY, 0, -1, AngleSource::param(0)}}),
                    ConfigError);
    // Parameter never used.
    CHECK_THROWS_AS(CircuitTemplate(1, 2, 0, {{K::RX, 0, -1, AngleSource::param(0)}}),
                    ConfigError);
    // Data index never read.
    CHECK_THROWS_AS(CircuitTemplate(1, 0, 2, {{K::RX, 0, -1, AngleSource::data(0, 1.0)}}),
                    ConfigError);
    // Bad qubit.
    CHECK_THROWS_AS(CircuitTemplate(2, 0, 0, {{K::CNOT, 0, 0, {}}}), ConfigError);
}

TEST_CASE("evaluate on all-zero angles stays at |0000>", "[circuits]") {
    const auto t = build_squanv_template(4, 1, 1, 1);
    const ParamVector zeros(12, 0.0);
    const auto e = evaluate(t, zeros, std::vector<double>{0.0});
    for (const double f : e.features) CHECK(f == 1.0);
}

TEST_CASE("evaluate matches the dense oracle on a 4-qubit template", "[circuits][oracle]") {
    const auto t = build_squanv_template(4, 1, 1, 1);
    const ParamVector zeros(12, 0.0);
    const std::vector<double> patch{1.0};

    auto v = oracle::zero(4);
    for (std::size_t k = 0; k < t.ops().size(); ++k) {
        v = oracle::apply(oracle::gate_matrix(4, t.bind(k, zeros, patch)), v);
    }
    const auto e = evaluate(t, zeros, patch);
    for (int q = 0; q < 4; ++q) {
        CHECK_THAT(e.features[q], WithinAbs(oracle::expect_z(v, q), 1e-12));
    }

    Rng rng(21);
    const auto t2 = build_squanv_template(3, 2, 2, 2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = random_params(rng, t2.n_params());
        const auto x = random_patch(rng, 4);
        auto w = oracle::zero(3);
        for (std::size_t k = 0; k < t2.ops().size(); ++k) {
            w = oracle::apply(oracle::gate_matrix(3, t2.bind(k, p, x)), w);
        }
        const auto s = evaluate(t2, p, x);
        for (std::size_t k = 0; k < w.size(); ++k) REQUIRE(std::abs(s.state[k] - w[k]) < 1e-12);
    }
}

TEST_CASE("evaluate is bounded and deterministic", "[circuits][property]") {
    Rng rng(9);
    const auto t = build_squanv_template(4, 2, 2, 4);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_params(rng, 48);
        const auto x = random_patch(rng, 4);
        const auto a = evaluate(t, p, x);
        const auto b = evaluate(t, p, x);
        REQUIRE(a.features == b.features);
        REQUIRE(a.state == b.state);
        for (const double f : a.features) {
            REQUIRE(f >= -1.0 - 1e-12);
            REQUIRE(f <= 1.0 + 1e-12);
        }
    }
    CHECK_THROWS_AS(evaluate(t, ParamVector(48, 0.0), std::vector<double>(3, 0.0)), ConfigError);
    CHECK_THROWS_AS(evaluate(t, ParamVector(47, 0.0), std::vector<double>(4, 0.0)), ConfigError);
}

TEST_CASE("parameter-shift gradient of RY(theta)|0>", "[circuits]") {
    const auto t = ry_template();
    const ParamVector theta{0.3};
    const auto jac = grad_expectation_paramshift(t, theta, {});
    CHECK_THAT(jac(0, 0), WithinAbs(-0.29552020666133955, 1e-12));
    const auto adj = grad_expectation_adjoint(t, theta, {});
    CHECK_THAT(adj(0, 0), WithinAbs(-0.29552020666133955, 1e-12));
}

TEST_CASE("gradients of a parameter-free circuit are empty", "[circuits]") {
    const CircuitTemplate t(2, 0, 1, {{GateType::RY, 0, -1, AngleSource::data(0, 1.0)},
                                      {GateType::CNOT, 1, 0, {}}});
    const auto ps = grad_expectation_paramshift(t, {}, std::vector<double>{0.5});
    CHECK(ps.rows == 0);
    CHECK(ps.values.empty());
    const auto adj = grad_expectation_adjoint(t, {}, std::vector<double>{0.5});
    CHECK(adj.rows == 0);
    CHECK(adj.values.empty());
}

TEST_CASE("parameter-shift matches central differences", "[circuits][oracle]") {
    Rng rng(1234);
    const auto t = build_squanv_template(4, 2, 2, 4);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = random_params(rng, 48);
        const auto x = random_patch(rng, 4);
        const auto jac = grad_expectation_paramshift(t, p, x);
        for (int j = 0; j < 48; ++j) {
            for (int q = 0; q < 4; ++q) {
                const double fd = central(
                    [&](double v) {
                        auto pp = p;
                        pp[j] = v;
                        return evaluate(t, pp, x).features[q];
                    },
                    p[j]);
                REQUIRE(std::abs(jac(j, q) - fd) < 1e-6);
            }
        }
    }
}

TEST_CASE("adjoint equals parameter-shift on random templates", "[circuits][oracle]") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int nq = 2 + static_cast<int>(rng.index(7)); // 2..8
        const int kh = 1 + static_cast<int>(rng.index(3));
        const int kw = 1 + static_cast<int>(rng.index(3));
        const int blocks = 1 + static_cast<int>(rng.index(2));
        const auto t = build_squanv_template(nq, kh, kw, blocks);
        const auto p = random_params(rng, t.n_params());
        const auto x = random_patch(rng, t.data_arity());
        const auto ps = grad_expectation_paramshift(t, p, x);
        const auto adj = grad_expectation_adjoint(t, p, x);
        REQUIRE(ps.rows == adj.rows);
        for (std::size_t k = 0; k < ps.values.size(); ++k) {
            REQUIRE(std::abs(ps.values[k] - adj.values[k]) < 1e-9);
        }
    }
}

TEST_CASE("adjoint VJP equals the contracted Jacobian", "[circuits]") {
    Rng rng(8);
    const auto t = build_squanv_template(4, 2, 2, 4);
    const auto p = random_params(rng, 48);
    const auto x = random_patch(rng, 4);
    const std::vector<double> cot{0.3, -1.2, 0.0, 2.5};
    const auto jac = grad_expectation_paramshift(t, p, x);
    const auto vjp = vjp_expectation_adjoint(t, p, x, cot);
    for (int j = 0; j < 48; ++j) {
        double expect = 0.0;
        for (int q = 0; q < 4; ++q) expect += jac(j, q) * cot[q];
        CHECK_THAT(vjp[j], WithinAbs(expect, 1e-12));
    }
}

TEST_CASE("fidelity gradient: analytic single-qubit case", "[circuits]") {
    const auto t = ry_template();
    const ParamVector a{1.3};
    const ParamVector b{0.3};
    CHECK_THAT(filter_fidelity(t, a, b, {}), WithinAbs(std::pow(std::cos(0.5), 2), 1e-12));
    const auto g = grad_fidelity_paramshift(t, a, b, {});
    CHECK_THAT(g.grad_a[0], WithinAbs(-0.42073549240394825, 1e-12));
    CHECK_THAT(g.grad_b[0], WithinAbs(0.42073549240394825, 1e-12));
}

TEST_CASE("fidelity gradient vanishes at coincident parameters", "[circuits]") {
    Rng rng(99);
    const auto t = build_squanv_template(4, 2, 2, 4);
    const auto p = random_params(rng, 48);
    const auto x = random_patch(rng, 4);
    const auto g = grad_fidelity_paramshift(t, p, p, x);
    for (int j = 0; j < 48; ++j) {
        CHECK(std::abs(g.grad_a[j]) < 1e-9);
        CHECK(std::abs(g.grad_b[j]) < 1e-9);
    }
    // Coincident parameters are a maximum: stepping away lowers fidelity.
    auto q = p;
    q[5] += 1e-3;
    CHECK(filter_fidelity(t, q, p, x) <= 1.0);
}

TEST_CASE("fidelity gradient matches central differences", "[circuits][oracle]") {
    Rng rng(4321);
    const auto t = build_squanv_template(4, 2, 2, 4);
    for (int trial = 0; trial < 3; ++trial) {
        const auto a = random_params(rng, 48);
        const auto b = random_params(rng, 48);
        const auto x = random_patch(rng, 4);
        const auto g = grad_fidelity_paramshift(t, a, b, x);
        for (int j = 0; j < 48; ++j) {
            const double fa = central(
                [&](double v) {
                    auto aa = a;
                    aa[j] = v;
                    return filter_fidelity(t, aa, b, x);
                },
                a[j]);
            const double fb = central(
                [&](double v) {
                    auto bb = b;
                    bb[j] = v;
                    return filter_fidelity(t, a, bb, x);
                },
                b[j]);
            REQUIRE(std::abs(g.grad_a[j] - fa) < 1e-6);
            REQUIRE(std::abs(g.grad_b[j] - fb) < 1e-6);
        }
    }
}

TEST_CASE("fidelity gradient swaps with its arguments", "[circuits][property]") {
    Rng rng(55);
    const auto t = build_squanv_template(4, 2, 2, 2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_params(rng, t.n_params());
        const auto b = random_params(rng, t.n_params());
        const auto x = random_patch(rng, 4);
        const auto ab = grad_fidelity_paramshift(t, a, b, x);
        const auto ba = grad_fidelity_paramshift(t, b, a, x);
        for (int j = 0; j < t.n_params(); ++j) {
            REQUIRE(std::abs(ab.grad_a[j] - ba.grad_b[j]) < 1e-12);
            REQUIRE(std::abs(ab.grad_b[j] - ba.grad_a[j]) < 1e-12);
        }
    }
}
