// calibration.hpp
//
// Fitting the correction offset tau of the corrected baseline on a known
// oracle.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "loc/baselines.hpp"
#include "loc/simulator.hpp"

namespace loc::baselines {

struct CalibrationSetup {
    double step = 0.25;
    std::uint64_t seed = 0;
    simulator::SimulationConfig sim;
    std::string oracle_name = "calibration";
};

/// Smallest tau on the grid 0, step, 2 step, ... (up to the oracle's score
/// headroom above the lowest target) for which the corrected policy meets
/// every target of `targets` within the template's horizon.
inline CorrectionFactor calibrate_tau(const simulator::Oracle& oracle, const curves::CurveFamily& family,
                                      const std::vector<double>& targets, const planner::ProblemSpec& spec_template,
                                      const CalibrationSetup& setup = {}) {
    require(!targets.empty(), "calibration needs at least one target");
    require(setup.step > 0.0, "calibration step must be positive");
    const double top = simulator::oracle_max_score(oracle);
    double lowest = targets.front();
    for (double v : targets) {
        if (v > top) throw CalibrationImpossible("target " + std::to_string(v) + " exceeds the oracle's best score");
        lowest = std::min(lowest, v);
    }
    const double headroom = top - lowest;
    const auto policy_for = [&](double tau) { return simulator::Policy::corrected(family, tau); };
    for (int i = 0;; ++i) {
        const double tau = setup.step * i;
        if (tau > headroom + 1e-12) break;
        bool all_met = true;
        for (double v : targets) {
            auto spec = spec_template;
            spec.target = v;
            const auto rec = simulator::run_collection(spec, oracle, policy_for(tau), setup.seed, setup.sim);
            if (!rec.met_target) {
                all_met = false;
                break;
            }
        }
        if (all_met) return {tau, setup.oracle_name};
    }
    throw CalibrationImpossible("no tau up to the oracle headroom meets every calibration target");
}

}  // namespace loc::baselines
