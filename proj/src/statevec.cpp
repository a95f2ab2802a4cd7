#include "squanv/statevec.hpp"

#include "squanv/error.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace squanv {

namespace {

void check_qubit(int q, int n_qubits) {
    require(q >= 0 && q < n_qubits,
            "qubit index " + std::to_string(q) + " out of range for " +
                std::to_string(n_qubits) + "-qubit state");
}

// Visits every index pair (i0, i1) differing only in bit `q`, i0 having it clear.
template <class F> inline void for_each_pair(std::size_t dim, int q, F &&f) {
    const std::size_t stride = std::size_t{1} << q;
    for (std::size_t hi = 0; hi < dim; hi += 2 * stride) {
        for (std::size_t i0 = hi; i0 < hi + stride; ++i0) {
            f(i0, i0 + stride);
        }
    }
}

void rotate_x(std::span<cplx> a, int q, double theta) {
    const double c = std::cos(theta / 2);
    const double s = std::sin(theta / 2);
    for_each_pair(a.size(), q, [&](std::size_t i0, std::size_t i1) {
        const cplx v0 = a[i0];
        const cplx v1 = a[i1];
        // [[c, -is], [-is, c]]
        a[i0] = {c * v0.real() + s * v1.imag(), c * v0.imag() - s * v1.real()};
        a[i1] = {s * v0.imag() + c * v1.real(), -s * v0.real() + c * v1.imag()};
    });
}

void rotate_y(std::span<cplx> a, int q, double theta) {
    const double c = std::cos(theta / 2);
    const double s = std::sin(theta / 2);
    for_each_pair(a.size(), q, [&](std::size_t i0, std::size_t i1) {
        const cplx v0 = a[i0];
        const cplx v1 = a[i1];
        a[i0] = {c * v0.real() - s * v1.real(), c * v0.imag() - s * v1.imag()};
        a[i1] = {s * v0.real() + c * v1.real(), s * v0.imag() + c * v1.imag()};
    });
}

// Complex products are spelled out: std::complex operator* goes through the
// NaN-recovering library routine, which dominates these loops otherwise.
void rotate_z(std::span<cplx> a, int q, double theta) {
    const double c = std::cos(theta / 2);
    const double s = std::sin(theta / 2);
    for_each_pair(a.size(), q, [&](std::size_t i0, std::size_t i1) {
        const cplx v0 = a[i0];
        const cplx v1 = a[i1];
        // diag(c - is, c + is)
        a[i0] = {c * v0.real() + s * v0.imag(), c * v0.imag() - s * v0.real()};
        a[i1] = {c * v1.real() - s * v1.imag(), c * v1.imag() + s * v1.real()};
    });
}

void controlled_not(std::span<cplx> a, int control, int target) {
    const std::size_t cmask = std::size_t{1} << control;
    for_each_pair(a.size(), target, [&](std::size_t i0, std::size_t i1) {
        if ((i0 & cmask) != 0) {
            std::swap(a[i0], a[i1]);
        }
    });
}

void apply_rotation(std::span<cplx> a, GateType type, int q, double theta) {
    switch (type) {
    case GateType::RX:
        rotate_x(a, q, theta);
        break;
    case GateType::RY:
        rotate_y(a, q, theta);
        break;
    case GateType::RZ:
        rotate_z(a, q, theta);
        break;
    case GateType::CNOT:
        break;
    }
}

} // namespace

StateVector::StateVector(int n_qubits) : n_qubits_(n_qubits) {
    require(n_qubits >= 1 && n_qubits <= kMaxQubits,
            "n_qubits must be in [1, " + std::to_string(kMaxQubits) +
                "], got " + std::to_string(n_qubits));
    amps_.assign(std::size_t{1} << n_qubits, cplx{0.0, 0.0});
    amps_[0] = 1.0;
}

StateVector StateVector::from_amplitudes(std::vector<cplx> amplitudes) {
    const std::size_t n = amplitudes.size();
    require(n >= 2 && std::has_single_bit(n),
            "amplitude count must be a power of two >= 2");
    const int qubits = std::countr_zero(n);
    require(qubits <= kMaxQubits, "too many amplitudes");
    StateVector s;
    s.n_qubits_ = qubits;
    s.amps_ = std::move(amplitudes);
    return s;
}

double StateVector::norm_squared() const noexcept {
    double acc = 0.0;
    for (const auto &z : amps_) {
        acc += std::norm(z);
    }
    return acc;
}

StateVector zero_state(int n_qubits) { return StateVector(n_qubits); }

void validate_gate(const Gate &gate, int n_qubits) {
    check_qubit(gate.target, n_qubits);
    if (gate.type == GateType::CNOT) {
        check_qubit(gate.control, n_qubits);
        require(gate.control != gate.target,
                "CNOT control and target must differ");
    }
}

void apply_gate(StateVector &state, const Gate &gate) {
    validate_gate(gate, state.n_qubits());
    if (gate.type == GateType::CNOT) {
        controlled_not(state.amplitudes(), gate.control, gate.target);
    } else {
        apply_rotation(state.amplitudes(), gate.type, gate.target, gate.angle);
    }
}

void apply_gate_inverse(StateVector &state, const Gate &gate) {
    Gate inv = gate;
    inv.angle = -gate.angle;
    apply_gate(state, inv);
}

void apply_pauli(StateVector &state, GateType rotation, int qubit) {
    check_qubit(qubit, state.n_qubits());
    auto a = state.amplitudes();
    switch (rotation) {
    case GateType::RX:
        for_each_pair(a.size(), qubit,
                      [&](std::size_t i0, std::size_t i1) { std::swap(a[i0], a[i1]); });
        break;
    case GateType::RY:
        // Y = [[0, -i], [i, 0]]
        for_each_pair(a.size(), qubit, [&](std::size_t i0, std::size_t i1) {
            const cplx v0 = a[i0];
            const cplx v1 = a[i1];
            a[i0] = {v1.imag(), -v1.real()};
            a[i1] = {-v0.imag(), v0.real()};
        });
        break;
    case GateType::RZ:
        for_each_pair(a.size(), qubit,
                      [&](std::size_t, std::size_t i1) { a[i1] = -a[i1]; });
        break;
    case GateType::CNOT:
        throw ConfigError("CNOT has no rotation generator");
    }
}

StateVector applied(StateVector state, const Gate &gate) {
    apply_gate(state, gate);
    return state;
}

double expectation_z(const StateVector &state, int qubit) {
    check_qubit(qubit, state.n_qubits());
    const std::size_t mask = std::size_t{1} << qubit;
    const auto a = state.amplitudes();
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double p = std::norm(a[k]);
        acc += (k & mask) ? -p : p;
    }
    return acc;
}

cplx inner_product(const StateVector &a, const StateVector &b) {
    require(a.n_qubits() == b.n_qubits(),
            "inner product of states with different qubit counts (" +
                std::to_string(a.n_qubits()) + " vs " +
                std::to_string(b.n_qubits()) + ")");
    const auto x = a.amplitudes();
    const auto y = b.amplitudes();
    double re = 0.0;
    double im = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        // conj(x) * y
        re += x[k].real() * y[k].real() + x[k].imag() * y[k].imag();
        im += x[k].real() * y[k].imag() - x[k].imag() * y[k].real();
    }
    return {re, im};
}

cplx pauli_matrix_element(const StateVector &bra, const StateVector &ket,
                          GateType rotation, int qubit) {
    require(bra.n_qubits() == ket.n_qubits(),
            "matrix element between states with different qubit counts");
    check_qubit(qubit, ket.n_qubits());
    const auto x = bra.amplitudes();
    const auto y = ket.amplitudes();
    // conj(u) * v, accumulated into (re, im)
    double re = 0.0;
    double im = 0.0;
    const auto add = [&](cplx u, cplx v, double sign) {
        re += sign * (u.real() * v.real() + u.imag() * v.imag());
        im += sign * (u.real() * v.imag() - u.imag() * v.real());
    };
    switch (rotation) {
    case GateType::RX:
        for_each_pair(y.size(), qubit, [&](std::size_t i0, std::size_t i1) {
            add(x[i0], y[i1], 1.0);
            add(x[i1], y[i0], 1.0);
        });
        return {re, im};
    case GateType::RY:
        // <x|Y|y> = i * (<x1|y0> - <x0|y1>)
        for_each_pair(y.size(), qubit, [&](std::size_t i0, std::size_t i1) {
            add(x[i0], y[i1], -1.0);
            add(x[i1], y[i0], 1.0);
        });
        return {-im, re};
    case GateType::RZ:
        for_each_pair(y.size(), qubit, [&](std::size_t i0, std::size_t i1) {
            add(x[i0], y[i0], 1.0);
            add(x[i1], y[i1], -1.0);
        });
        return {re, im};
    case GateType::CNOT:
        break;
    }
    throw ConfigError("CNOT has no rotation generator");
}

double overlap_fidelity(const StateVector &a, const StateVector &b) {
    return std::norm(inner_product(a, b));
}

} // namespace squanv
