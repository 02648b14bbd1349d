// baselines.hpp
//
// Point-estimate policies: fit once, invert at the target (optionally raised
// by a correction offset tau), never request less than what is held.
#pragma once

#include <string>

#include "loc/core.hpp"
#include "loc/curves.hpp"

namespace loc::baselines {

struct CorrectionFactor {
    double tau = 0.0;
    std::string calibrated_on;
};

/// Single fit with the curve defaults, inverted at `target` within q_max.
inline curves::Inversion regression_point_estimate(const curves::RegressionSet& data, double target,
                                                   const Sizes& costs, const curves::CurveFamily& family,
                                                   const Sizes& q_max, std::uint64_t tie_seed = 0) {
    const auto fit = curves::fit_curve(family, data);
    return curves::invert_curve(fit.model, target, costs, q_max, tie_seed);
}

/// Amount to hold after this round: max(D-hat, current), or `current` when
/// the fitted curve cannot reach the target.
inline Sizes regression_point_policy(const curves::RegressionSet& data, double target, const Sizes& costs,
                                     const curves::CurveFamily& family, const Sizes& current, const Sizes& q_max,
                                     std::uint64_t tie_seed = 0) {
    require(current.size() == costs.size(), "current amount dimension mismatch");
    const auto inv = regression_point_estimate(data, target, costs, family, q_max, tie_seed);
    if (!inv.reachable()) return current;
    return elementwise_max(*inv.amount, current);
}

inline Sizes corrected_policy(const curves::RegressionSet& data, double target, const Sizes& costs,
                              const curves::CurveFamily& family, double tau, const Sizes& current,
                              const Sizes& q_max, std::uint64_t tie_seed = 0) {
    require(tau >= 0.0, "tau must be non-negative");
    return regression_point_policy(data, target + tau, costs, family, current, q_max, tie_seed);
}

}  // namespace loc::baselines
