#pragma once

// Central finite-difference verification of every analytic gradient in the
// training objective and the network backward pass.

#include <cstdint>
#include <string>
#include <vector>

namespace sskd {

struct GradcheckResult {
    std::string loss;
    int instances = 0;
    double max_rel_error = 0;
    double tolerance = 0;
    bool passed = false;
};

/// Relative error of one instance is max|analytic - numeric| divided by the
/// largest absolute entry of either gradient. Instances are drawn from `seed`.
std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, int instances = 20);

} // namespace sskd
