#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace squanv {

using cplx = std::complex<double>;

/// Largest register the simulator will allocate (2^20 amplitudes).
inline constexpr int kMaxQubits = 20;

/**
 * Dense pure state over n qubits.
 *
 * Qubit 0 is the least-significant bit of the amplitude index, so the basis
 * state |q_{n-1} ... q_1 q_0> lives at index sum_k q_k 2^k. Amplitudes are a
 * single contiguous buffer of std::complex<double>, i.e. interleaved (re, im).
 */
class StateVector {
  public:
    /// |0...0> on n_qubits qubits; throws ConfigError outside [1, kMaxQubits].
    explicit StateVector(int n_qubits);

    /// Takes ownership of raw amplitudes (length must be a power of two).
    static StateVector from_amplitudes(std::vector<cplx> amplitudes);

    [[nodiscard]] int n_qubits() const noexcept { return n_qubits_; }
    [[nodiscard]] std::size_t size() const noexcept { return amps_.size(); }

    [[nodiscard]] std::span<const cplx> amplitudes() const noexcept {
        return amps_;
    }
    [[nodiscard]] std::span<cplx> amplitudes() noexcept { return amps_; }

    cplx &operator[](std::size_t k) noexcept { return amps_[k]; }
    const cplx &operator[](std::size_t k) const noexcept { return amps_[k]; }

    [[nodiscard]] double norm_squared() const noexcept;

    friend bool operator==(const StateVector &, const StateVector &) = default;

  private:
    StateVector() = default;

    int n_qubits_ = 0;
    std::vector<cplx> amps_;
};

enum class GateType { RX, RY, RZ, CNOT };

/// One gate instance. Rotations are exp(-i * angle * P / 2), P in {X, Y, Z}.
struct Gate {
    GateType type = GateType::RX;
    int target = 0;
    int control = -1; // CNOT only
    double angle = 0.0;

    static Gate rx(int q, double theta) { return {GateType::RX, q, -1, theta}; }
    static Gate ry(int q, double theta) { return {GateType::RY, q, -1, theta}; }
    static Gate rz(int q, double theta) { return {GateType::RZ, q, -1, theta}; }
    static Gate cnot(int control, int target) {
        return {GateType::CNOT, target, control, 0.0};
    }
};

[[nodiscard]] constexpr bool is_rotation(GateType t) noexcept {
    return t != GateType::CNOT;
}

StateVector zero_state(int n_qubits);

/// Throws ConfigError when the gate's qubit indices do not fit the register.
void validate_gate(const Gate &gate, int n_qubits);

/// Multiplies the state by the gate's unitary in place.
void apply_gate(StateVector &state, const Gate &gate);

/// Applies the inverse of the gate (rotation by -angle; CNOT is self-inverse).
void apply_gate_inverse(StateVector &state, const Gate &gate);

/// Applies the bare Pauli generator of a rotation gate type (X, Y or Z).
void apply_pauli(StateVector &state, GateType rotation, int qubit);

/// Value-semantics convenience wrapper around apply_gate.
[[nodiscard]] StateVector applied(StateVector state, const Gate &gate);

/// <psi| Z_qubit |psi>, exact.
double expectation_z(const StateVector &state, int qubit);

/// <a|b> = sum_k conj(a_k) b_k.
cplx inner_product(const StateVector &a, const StateVector &b);

/// <bra| P_qubit |ket> for the Pauli generator of a rotation type.
cplx pauli_matrix_element(const StateVector &bra, const StateVector &ket,
                          GateType rotation, int qubit);

/// |<a|b>|^2 for pure states.
double overlap_fidelity(const StateVector &a, const StateVector &b);

} // namespace squanv
