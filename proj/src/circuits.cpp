#include "squanv/circuits.hpp"

#include "squanv/error.hpp"

#include <cmath>
#include <string>

namespace squanv {

CircuitTemplate::CircuitTemplate(int n_qubits, int n_params, int data_arity,
                                 std::vector<TemplateOp> ops)
    : n_qubits_(n_qubits), n_params_(n_params), data_arity_(data_arity),
      ops_(std::move(ops)) {
    require(n_qubits >= 1 && n_qubits <= kMaxQubits, "template n_qubits out of range");
    require(n_params >= 0, "template n_params must be non-negative");
    require(data_arity >= 0, "template data_arity must be non-negative");

    constexpr auto unset = static_cast<std::size_t>(-1);
    param_op_.assign(static_cast<std::size_t>(n_params), unset);
    std::vector<bool> data_seen(static_cast<std::size_t>(data_arity), false);

    for (std::size_t k = 0; k < ops_.size(); ++k) {
        const auto &op = ops_[k];
        validate_gate(Gate{op.type, op.target, op.control, 0.0}, n_qubits);
        if (op.type == GateType::CNOT) {
            continue;
        }
        const auto &src = op.angle;
        switch (src.kind) {
        case AngleSource::Kind::Constant:
            break;
        case AngleSource::Kind::Data:
            require(src.index >= 0 && src.index < data_arity,
                    "data index " + std::to_string(src.index) + " out of range");
            data_seen[src.index] = true;
            break;
        case AngleSource::Kind::Param:
            require(src.index >= 0 && src.index < n_params,
                    "param index " + std::to_string(src.index) + " out of range");
            require(param_op_[src.index] == unset,
                    "param " + std::to_string(src.index) +
                        " drives more than one gate");
            param_op_[src.index] = k;
            break;
        }
    }
    for (int j = 0; j < n_params; ++j) {
        require(param_op_[j] != unset, "param " + std::to_string(j) + " is unused");
    }
    for (int i = 0; i < data_arity; ++i) {
        require(data_seen[i], "data index " + std::to_string(i) + " is unused");
    }
}

Gate CircuitTemplate::bind(std::size_t k, std::span<const double> params,
                           std::span<const double> patch) const {
    const auto &op = ops_[k];
    double angle = 0.0;
    switch (op.angle.kind) {
    case AngleSource::Kind::Constant:
        angle = op.angle.value;
        break;
    case AngleSource::Kind::Data:
        angle = op.angle.value * patch[op.angle.index];
        break;
    case AngleSource::Kind::Param:
        angle = params[op.angle.index];
        break;
    }
    return Gate{op.type, op.target, op.control, angle};
}

void CircuitTemplate::check_inputs(std::span<const double> params,
                                   std::span<const double> patch) const {
    require(params.size() == static_cast<std::size_t>(n_params_),
            "expected " + std::to_string(n_params_) + " parameters, got " +
                std::to_string(params.size()));
    require(patch.size() == static_cast<std::size_t>(data_arity_),
            "expected patch of " + std::to_string(data_arity_) +
                " values, got " + std::to_string(patch.size()));
}

CircuitTemplate build_squanv_template(int n_qubits, int kernel_h, int kernel_w,
                                      int n_blocks) {
    require(n_qubits >= 2, "template needs at least 2 qubits");
    require(kernel_h >= 1 && kernel_w >= 1, "kernel dimensions must be positive");
    require(n_blocks >= 1, "template needs at least one block");

    const int arity = kernel_h * kernel_w;
    const int uploads = (arity + n_qubits - 1) / n_qubits;

    std::vector<TemplateOp> ops;
    int next_param = 0;
    for (int m = 0; m < uploads; ++m) {
        for (int q = 0; q < n_qubits; ++q) {
            const int i = (m * n_qubits + q) % arity;
            ops.push_back({GateType::RY, q, -1, AngleSource::data(i, kEncodingScale)});
        }
        for (int b = 0; b < n_blocks; ++b) {
            for (int q = 0; q < n_qubits; ++q) {
                for (auto type : {GateType::RX, GateType::RY, GateType::RZ}) {
                    ops.push_back({type, q, -1, AngleSource::param(next_param++)});
                }
            }
            for (int q = 0; q < n_qubits; ++q) {
                ops.push_back({GateType::CNOT, (q + 1) % n_qubits, q, {}});
            }
        }
    }
    return {n_qubits, next_param, arity, std::move(ops)};
}

StateVector prepare_state(const CircuitTemplate &tmpl,
                          std::span<const double> params,
                          std::span<const double> patch) {
    tmpl.check_inputs(params, patch);
    StateVector state(tmpl.n_qubits());
    for (std::size_t k = 0; k < tmpl.ops().size(); ++k) {
        apply_gate(state, tmpl.bind(k, params, patch));
    }
    return state;
}

Evaluation evaluate(const CircuitTemplate &tmpl, std::span<const double> params,
                    std::span<const double> patch) {
    Evaluation out{{}, prepare_state(tmpl, params, patch)};
    out.features.resize(static_cast<std::size_t>(tmpl.n_qubits()));
    for (int q = 0; q < tmpl.n_qubits(); ++q) {
        out.features[q] = expectation_z(out.state, q);
    }
    return out;
}

Jacobian grad_expectation_paramshift(const CircuitTemplate &tmpl,
                                     std::span<const double> params,
                                     std::span<const double> patch,
                                     double shift) {
    tmpl.check_inputs(params, patch);
    Jacobian jac(tmpl.n_params(), tmpl.n_qubits());
    ParamVector shifted(params.begin(), params.end());
    for (int j = 0; j < tmpl.n_params(); ++j) {
        shifted[j] = params[j] + shift;
        const auto plus = evaluate(tmpl, shifted, patch).features;
        shifted[j] = params[j] - shift;
        const auto minus = evaluate(tmpl, shifted, patch).features;
        shifted[j] = params[j];
        for (int q = 0; q < tmpl.n_qubits(); ++q) {
            jac(j, q) = (plus[q] - minus[q]) / 2;
        }
    }
    return jac;
}

std::vector<double> vjp_expectation_adjoint(const CircuitTemplate &tmpl,
                                            std::span<const double> params,
                                            std::span<const double> patch,
                                            std::span<const double> cotangent) {
    require(cotangent.size() == static_cast<std::size_t>(tmpl.n_qubits()),
            "cotangent length must equal the qubit count");
    std::vector<double> grad(static_cast<std::size_t>(tmpl.n_params()), 0.0);
    if (tmpl.n_params() == 0) {
        tmpl.check_inputs(params, patch);
        return grad;
    }

    StateVector phi = prepare_state(tmpl, params, patch);

    // lambda = H |phi>, H = sum_q cotangent[q] Z_q is diagonal.
    StateVector lambda = phi;
    auto amps = lambda.amplitudes();
    for (std::size_t k = 0; k < amps.size(); ++k) {
        double h = 0.0;
        for (int q = 0; q < tmpl.n_qubits(); ++q) {
            h += ((k >> q) & 1U) ? -cotangent[q] : cotangent[q];
        }
        amps[k] *= h;
    }

    // d/dtheta <psi|H|psi> = Im <lambda_k| P |phi_k> at each rotation k,
    // with both states taken right after gate k.
    const auto ops = tmpl.ops();
    for (std::size_t k = ops.size(); k-- > 0;) {
        const Gate gate = tmpl.bind(k, params, patch);
        if (ops[k].angle.kind == AngleSource::Kind::Param) {
            grad[ops[k].angle.index] =
                pauli_matrix_element(lambda, phi, gate.type, gate.target).imag();
        }
        if (k > 0) {
            apply_gate_inverse(phi, gate);
            apply_gate_inverse(lambda, gate);
        }
    }
    return grad;
}

Jacobian grad_expectation_adjoint(const CircuitTemplate &tmpl,
                                  std::span<const double> params,
                                  std::span<const double> patch) {
    Jacobian jac(tmpl.n_params(), tmpl.n_qubits());
    std::vector<double> onehot(static_cast<std::size_t>(tmpl.n_qubits()), 0.0);
    for (int q = 0; q < tmpl.n_qubits(); ++q) {
        onehot[q] = 1.0;
        const auto column = vjp_expectation_adjoint(tmpl, params, patch, onehot);
        onehot[q] = 0.0;
        for (int j = 0; j < tmpl.n_params(); ++j) {
            jac(j, q) = column[j];
        }
    }
    return jac;
}

double filter_fidelity(const CircuitTemplate &tmpl, std::span<const double> params_a,
                       std::span<const double> params_b,
                       std::span<const double> patch) {
    return overlap_fidelity(prepare_state(tmpl, params_a, patch),
                            prepare_state(tmpl, params_b, patch));
}

namespace {

std::vector<double> shift_against(const CircuitTemplate &tmpl,
                                  std::span<const double> moving,
                                  const StateVector &frozen,
                                  std::span<const double> patch, double shift) {
    std::vector<double> grad(static_cast<std::size_t>(tmpl.n_params()), 0.0);
    ParamVector shifted(moving.begin(), moving.end());
    for (int j = 0; j < tmpl.n_params(); ++j) {
        shifted[j] = moving[j] + shift;
        const double plus = overlap_fidelity(prepare_state(tmpl, shifted, patch), frozen);
        shifted[j] = moving[j] - shift;
        const double minus = overlap_fidelity(prepare_state(tmpl, shifted, patch), frozen);
        shifted[j] = moving[j];
        grad[j] = (plus - minus) / 2;
    }
    return grad;
}

} // namespace

FidelityGradient grad_fidelity_paramshift(const CircuitTemplate &tmpl,
                                          std::span<const double> params_a,
                                          std::span<const double> params_b,
                                          std::span<const double> patch,
                                          double shift) {
    const StateVector psi_a = prepare_state(tmpl, params_a, patch);
    const StateVector psi_b = prepare_state(tmpl, params_b, patch);
    return {shift_against(tmpl, params_a, psi_b, patch, shift),
            shift_against(tmpl, params_b, psi_a, patch, shift)};
}

} // namespace squanv
