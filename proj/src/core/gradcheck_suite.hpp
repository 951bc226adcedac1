#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/layers.hpp"

namespace hsrnn {

struct LayerCheck {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradcheckSuiteReport {
    std::uint64_t seed = 0;
    double max_rel_err = 0.0;
    bool pass = false;
    std::vector<LayerCheck> layers;

    std::string to_json() const;
};

// Gradient-checks every layer type plus a full tiny spatial-spectral
// parallel-GRU model against central finite differences. The defaults
// are the contractual settings; step/floor are overridable so callers
// can re-verify marginal coordinates at a numerically easier step.
GradcheckSuiteReport run_gradcheck_suite(std::uint64_t seed, double step = 1e-6,
                                         double denom_floor = 1e-8);

}  // namespace hsrnn
