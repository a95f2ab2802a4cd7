#pragma once

#include "squanv/circuits.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace squanv {

struct GradcheckEntry {
    std::string name;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;

    [[nodiscard]] bool passed() const;
};

struct GradcheckOptions {
    std::uint64_t seed = 1;
    int draws = 20;
    /// Shift handed to every parameter-shift call; anything but pi/2 must
    /// make the harness fail.
    double shift = kParamShift;
};

/**
 * Cross-checks the gradient engines:
 *  - expectation parameter-shift vs central differences (h = 1e-5), < 1e-6
 *  - fidelity parameter-shift vs central differences, < 1e-6
 *  - adjoint vs parameter-shift, < 1e-9
 *  - end-to-end model gradient (6x6 image, 2 filters) vs central
 *    differences on 10 filter parameters and 10 head weights, < 1e-5
 * All circuit checks use the 48-parameter 4-qubit template.
 */
GradcheckReport run_gradcheck(const GradcheckOptions &options);

} // namespace squanv
