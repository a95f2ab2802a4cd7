#pragma once

#include "squanv/statevec.hpp"

#include <numbers>
#include <span>
#include <vector>

namespace squanv {

/// Where a template gate takes its rotation angle from at evaluation time.
struct AngleSource {
    enum class Kind { Constant, Data, Param };

    Kind kind = Kind::Constant;
    double value = 0.0; // Constant: the angle; Data: radians per unit of input
    int index = -1;     // Data: patch position; Param: parameter position

    static AngleSource constant(double radians) {
        return {Kind::Constant, radians, -1};
    }
    static AngleSource data(int index, double scale) {
        return {Kind::Data, scale, index};
    }
    static AngleSource param(int index) { return {Kind::Param, 0.0, index}; }

    friend bool operator==(const AngleSource &, const AngleSource &) = default;
};

struct TemplateOp {
    GateType type = GateType::RY;
    int target = 0;
    int control = -1;
    AngleSource angle;

    friend bool operator==(const TemplateOp &, const TemplateOp &) = default;
};

using ParamVector = std::vector<double>;

/**
 * A gate list whose angles are bound at evaluation time to a data patch and
 * a trainable parameter vector.
 *
 * Every parameter index feeds exactly one rotation gate, which is what makes
 * the two-term parameter-shift rule exact. Every data index is read by at
 * least one gate.
 */
class CircuitTemplate {
  public:
    CircuitTemplate(int n_qubits, int n_params, int data_arity,
                    std::vector<TemplateOp> ops);

    [[nodiscard]] int n_qubits() const noexcept { return n_qubits_; }
    [[nodiscard]] int n_params() const noexcept { return n_params_; }
    [[nodiscard]] int data_arity() const noexcept { return data_arity_; }
    [[nodiscard]] std::span<const TemplateOp> ops() const noexcept { return ops_; }

    /// Position in ops() of the gate driven by parameter j.
    [[nodiscard]] std::size_t param_op(int j) const { return param_op_[j]; }

    /// Resolves op k against concrete inputs.
    [[nodiscard]] Gate bind(std::size_t k, std::span<const double> params,
                            std::span<const double> patch) const;

    void check_inputs(std::span<const double> params,
                      std::span<const double> patch) const;

    friend bool operator==(const CircuitTemplate &,
                           const CircuitTemplate &) = default;

  private:
    int n_qubits_;
    int n_params_;
    int data_arity_;
    std::vector<TemplateOp> ops_;
    std::vector<std::size_t> param_op_;
};

/// Pixel-to-angle scale of the encoding layer: RY(pi * pixel).
inline constexpr double kEncodingScale = std::numbers::pi;

/// Shift used by the two-term parameter-shift rule.
inline constexpr double kParamShift = std::numbers::pi / 2;

/**
 * Data re-uploading template: for each chunk of n_qubits data values an RY
 * encoding layer, then `n_blocks` blocks of RX.RY.RZ on every qubit followed
 * by a CNOT ring. Chunk m feeds qubit q with data index (m*n_qubits + q)
 * modulo the patch size, so short or ragged patches cycle.
 * With (4, 2, 2, 4) this yields 48 parameters.
 */
CircuitTemplate build_squanv_template(int n_qubits, int kernel_h, int kernel_w,
                                      int n_blocks);

struct Evaluation {
    std::vector<double> features; // <Z_q>, q = 0..n_qubits-1
    StateVector state;            // pre-measurement state
};

/// Runs the circuit on |0...0> and returns the state it prepares.
StateVector prepare_state(const CircuitTemplate &tmpl,
                          std::span<const double> params,
                          std::span<const double> patch);

Evaluation evaluate(const CircuitTemplate &tmpl, std::span<const double> params,
                    std::span<const double> patch);

/// Dense [n_params x n_qubits] derivative table, row-major.
struct Jacobian {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Jacobian() = default;
    Jacobian(int r, int c)
        : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

    double &operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const {
        return values[static_cast<std::size_t>(r) * cols + c];
    }
};

/// d<Z_q>/d theta_j by the two-term rule (f(+s) - f(-s)) / 2.
/// `shift` is exposed only so harnesses can check their own sensitivity.
Jacobian grad_expectation_paramshift(const CircuitTemplate &tmpl,
                                     std::span<const double> params,
                                     std::span<const double> patch,
                                     double shift = kParamShift);

/// Same table as grad_expectation_paramshift via reverse-mode sweeps.
Jacobian grad_expectation_adjoint(const CircuitTemplate &tmpl,
                                  std::span<const double> params,
                                  std::span<const double> patch);

/// Vector-Jacobian product sum_q cotangent[q] * d<Z_q>/d theta in a single
/// reverse sweep (observable H = sum_q cotangent[q] Z_q).
std::vector<double> vjp_expectation_adjoint(const CircuitTemplate &tmpl,
                                            std::span<const double> params,
                                            std::span<const double> patch,
                                            std::span<const double> cotangent);

/// |<psi(a)|psi(b)>|^2 with both filters fed the same patch.
double filter_fidelity(const CircuitTemplate &tmpl, std::span<const double> params_a,
                       std::span<const double> params_b, std::span<const double> patch);

struct FidelityGradient {
    std::vector<double> grad_a;
    std::vector<double> grad_b;
};

/// Gradient of filter_fidelity w.r.t. both parameter vectors. The fidelity
/// is the expectation of the projector onto psi(b) under psi(a), so the
/// two-term shift rule applies to each side with the other frozen.
FidelityGradient grad_fidelity_paramshift(const CircuitTemplate &tmpl,
                                          std::span<const double> params_a,
                                          std::span<const double> params_b,
                                          std::span<const double> patch,
                                          double shift = kParamShift);

} // namespace squanv
