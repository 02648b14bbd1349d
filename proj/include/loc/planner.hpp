// planner.hpp
//
// Expected-cost objective for multi-round data collection, its softplus
// reparameterization with analytic gradients, the grid-of-optimizers solver,
// and the closed-form single-round solution.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loc/core.hpp"
#include "loc/density.hpp"

namespace loc::planner {

using density::RequirementDistribution;

struct ProblemSpec {
    double target = 0.0;
    Sizes costs{1.0};
    double penalty = 1.0;
    int horizon = 1;
    Sizes q0{0.0};
    std::vector<Sizes> frozen_prefix;  // realized q_1..q_{t-1}; empty in round 1

    std::size_t dimension() const { return q0.size(); }
    std::size_t free_rounds() const { return static_cast<std::size_t>(horizon) - frozen_prefix.size(); }

    void validate() const {
        require(std::isfinite(target), "target must be finite");
        require(penalty > 0.0, "penalty must be positive");
        require(horizon >= 1, "horizon must be >= 1");
        require(!q0.empty(), "q0 must have at least one source");
        require(costs.size() == q0.size(), "costs and q0 must have the same dimension");
        for (double c : costs) require(c > 0.0, "costs must be positive");
        require(frozen_prefix.size() <= static_cast<std::size_t>(horizon), "frozen prefix longer than the horizon");
        const Sizes* prev = &q0;
        for (const auto& q : frozen_prefix) {
            require(q.size() == q0.size(), "frozen prefix entries must match the dimension");
            require(dominates(q, *prev), "frozen prefix must be non-decreasing from q0");
            prev = &q;
        }
    }
};

struct CollectionPlan {
    std::vector<Sizes> schedule;  // q_1..q_T
};

/// Checks q0 <= q_1 <= ... <= q_T and that the plan starts with the frozen prefix.
inline void validate_plan(const CollectionPlan& plan, const ProblemSpec& spec) {
    spec.validate();
    require(plan.schedule.size() == static_cast<std::size_t>(spec.horizon), "plan length must equal the horizon");
    const Sizes* prev = &spec.q0;
    for (std::size_t t = 0; t < plan.schedule.size(); ++t) {
        const auto& q = plan.schedule[t];
        require(q.size() == spec.dimension(), "plan entries must match the dimension");
        require(dominates(q, *prev), "plan must be non-decreasing from q0");
        if (t < spec.frozen_prefix.size()) require(q == spec.frozen_prefix[t], "plan must begin with the frozen prefix");
        prev = &q;
    }
}

/// Collection loss for a known requirement D*: pay for every increment
/// started before D* was reached, plus the penalty if q_T never reaches it.
/// With several sources "reached" means q >= D* in every coordinate.
inline double realized_loss(const CollectionPlan& plan, const ProblemSpec& spec, const Sizes& d_star) {
    validate_plan(plan, spec);
    require(d_star.size() == spec.dimension(), "d_star dimension mismatch");
    double loss = 0.0;
    const Sizes* prev = &spec.q0;
    for (const auto& q : plan.schedule) {
        if (!dominates(*prev, d_star)) {
            for (std::size_t k = 0; k < q.size(); ++k) loss += spec.costs[k] * (q[k] - (*prev)[k]);
        }
        prev = &q;
    }
    if (!dominates(*prev, d_star)) loss += spec.penalty;
    return loss;
}

/// sum_t c'(q_t - q_{t-1}) (1 - F(q_{t-1})) + P (1 - F(q_T)).
inline double expected_cost(const CollectionPlan& plan, const ProblemSpec& spec, const RequirementDistribution& dist) {
    validate_plan(plan, spec);
    require(dist.dimension() == spec.dimension(), "distribution dimension mismatch");
    double obj = 0.0;
    const Sizes* prev = &spec.q0;
    for (const auto& q : plan.schedule) {
        const double survival = 1.0 - dist.cdf(*prev);
        double step = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) step += spec.costs[k] * (q[k] - (*prev)[k]);
        obj += step * survival;
        prev = &q;
    }
    obj += spec.penalty * (1.0 - dist.cdf(*prev));
    return obj;
}

// ---------------------------------------------------------------------------
// Softplus reparameterization

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double softplus_inverse(double d) {
    require(d > 0.0, "softplus_inverse needs a positive argument");
    return d + std::log(-std::expm1(-d));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Plan whose free increments are d = scale * softplus(x). `x` holds the
/// free rounds in order, K values per round.
inline CollectionPlan plan_from_softplus(const ProblemSpec& spec, std::span<const double> x, double scale) {
    const std::size_t k = spec.dimension();
    require(x.size() == spec.free_rounds() * k, "softplus parameter count mismatch");
    require(scale > 0.0, "scale must be positive");
    CollectionPlan plan;
    plan.schedule = spec.frozen_prefix;
    Sizes q = spec.frozen_prefix.empty() ? spec.q0 : spec.frozen_prefix.back();
    for (std::size_t r = 0; r < spec.free_rounds(); ++r) {
        for (std::size_t j = 0; j < k; ++j) q[j] += scale * softplus(x[r * k + j]);
        plan.schedule.push_back(q);
    }
    return plan;
}

/// Inverse of plan_from_softplus; every free increment must be positive.
inline std::vector<double> softplus_from_plan(const ProblemSpec& spec, const CollectionPlan& plan, double scale) {
    validate_plan(plan, spec);
    const std::size_t k = spec.dimension(), f = spec.frozen_prefix.size();
    std::vector<double> x;
    Sizes prev = f ? spec.frozen_prefix.back() : spec.q0;
    for (std::size_t t = f; t < plan.schedule.size(); ++t) {
        for (std::size_t j = 0; j < k; ++j) x.push_back(softplus_inverse((plan.schedule[t][j] - prev[j]) / scale));
        prev = plan.schedule[t];
    }
    return x;
}

/// expected_cost evaluated through the reparameterization (same arithmetic path).
inline double softplus_objective(const ProblemSpec& spec, const RequirementDistribution& dist,
                                 std::span<const double> x, double scale) {
    return expected_cost(plan_from_softplus(spec, x, scale), spec, dist);
}

/// Objective and its analytic gradient with respect to x. Frozen rounds are
/// constants: they shape the objective but carry no parameters.
inline double softplus_objective_and_gradient(const ProblemSpec& spec, const RequirementDistribution& dist,
                                              std::span<const double> x, double scale, std::vector<double>& grad) {
    const std::size_t k = spec.dimension(), big_t = static_cast<std::size_t>(spec.horizon);
    const std::size_t f = spec.frozen_prefix.size();
    require(x.size() == (big_t - f) * k, "softplus parameter count mismatch");

    // q[0] = q0, q[t] for t = 1..T.
    std::vector<Sizes> q(big_t + 1);
    q[0] = spec.q0;
    for (std::size_t t = 1; t <= f; ++t) q[t] = spec.frozen_prefix[t - 1];
    for (std::size_t t = f + 1; t <= big_t; ++t) {
        q[t] = q[t - 1];
        for (std::size_t j = 0; j < k; ++j) q[t][j] += scale * softplus(x[(t - f - 1) * k + j]);
    }
    std::vector<double> cdf(big_t + 1);
    std::vector<Sizes> cdf_grad(big_t + 1);
    for (std::size_t t = 0; t <= big_t; ++t) {
        cdf[t] = dist.cdf(q[t]);
        if (t >= std::max<std::size_t>(f, 1)) cdf_grad[t] = dist.cdf_gradient(q[t]);
    }

    double obj = 0.0;
    std::vector<double> step(big_t + 1, 0.0);
    for (std::size_t t = 1; t <= big_t; ++t) {
        for (std::size_t j = 0; j < k; ++j) step[t] += spec.costs[j] * (q[t][j] - q[t - 1][j]);
        obj += step[t] * (1.0 - cdf[t - 1]);
    }
    obj += spec.penalty * (1.0 - cdf[big_t]);

    // d obj / d q_t, accumulated backwards into d obj / d d_r.
    grad.assign(x.size(), 0.0);
    std::vector<double> suffix(k, 0.0);
    for (std::size_t t = big_t; t >= f + 1; --t) {
        for (std::size_t j = 0; j < k; ++j) {
            double g = spec.costs[j] * (1.0 - cdf[t - 1]);
            if (t < big_t) g -= spec.costs[j] * (1.0 - cdf[t]) + step[t + 1] * cdf_grad[t][j];
            else g -= spec.penalty * cdf_grad[t][j];
            suffix[j] += g;
            const std::size_t idx = (t - f - 1) * k + j;
            grad[idx] = suffix[j] * scale * sigmoid(x[idx]);
        }
        if (t == 0) break;
    }
    return obj;
}

inline std::vector<double> softplus_gradient(const ProblemSpec& spec, const RequirementDistribution& dist,
                                             std::span<const double> x, double scale) {
    std::vector<double> g;
    softplus_objective_and_gradient(spec, dist, x, scale, g);
    return g;
}

// ---------------------------------------------------------------------------
// Solver

enum class Method { Momentum, Adam };

inline std::string method_name(Method m) { return m == Method::Momentum ? "momentum" : "adam"; }

struct OptimizerTrial {
    Method method = Method::Adam;
    double learning_rate = 0.1;
};

/// 11 learning rates log-spaced over [0.005, 500], for each method.
inline std::vector<double> default_learning_rates() {
    std::vector<double> lrs;
    for (int i = 0; i <= 10; ++i) lrs.push_back(0.005 * std::pow(10.0, 0.5 * i));
    return lrs;
}

inline std::vector<OptimizerTrial> make_grid(const std::vector<Method>& methods, const std::vector<double>& lrs) {
    std::vector<OptimizerTrial> grid;
    for (auto m : methods)
        for (double lr : lrs) grid.push_back({m, lr});
    return grid;
}

struct SolverConfig {
    std::vector<OptimizerTrial> grid = make_grid({Method::Momentum, Method::Adam}, default_learning_rates());
    int max_steps = 500;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Anchor of the initialization (typically the regression point estimate);
    /// falls back to the median (one source) or mean of the distribution.
    std::optional<Sizes> point_estimate;
    /// Increment unit d = scale * softplus(x); 0 picks the anchor's magnitude.
    double scale = 0.0;
    bool round_to_integer = true;
    std::size_t workers = 1;

    void validate() const {
        require(!grid.empty(), "optimizer grid must not be empty");
        require(max_steps >= 1, "max_steps must be >= 1");
        for (const auto& t : grid) require(t.learning_rate > 0.0, "learning rates must be positive");
        require(scale >= 0.0, "scale must be non-negative");
    }
};

struct SolveDiagnostics {
    OptimizerTrial best_trial;
    double initial_objective = 0.0;
    bool no_improvement = false;
    std::size_t diverged_trials = 0;
    double scale = 1.0;
};

struct PlanSolution {
    CollectionPlan plan;        // rounded up to integers when configured, else == continuous
    CollectionPlan continuous;
    double objective = 0.0;     // at the continuous plan
    SolveDiagnostics diagnostics;
};

/// Ceil every amount and restore monotonicity with a running maximum.
inline CollectionPlan round_plan(const CollectionPlan& plan, const ProblemSpec& spec) {
    CollectionPlan out = plan;
    Sizes prev = spec.q0;
    for (std::size_t t = 0; t < out.schedule.size(); ++t) {
        auto& q = out.schedule[t];
        if (t >= spec.frozen_prefix.size())
            for (std::size_t j = 0; j < q.size(); ++j)
                q[j] = std::max(std::ceil(q[j] - 1e-9 * std::max(1.0, std::abs(q[j]))), prev[j]);
        prev = q;
    }
    return out;
}

namespace detail {

struct TrialOutcome {
    std::vector<double> x;
    double objective = std::numeric_limits<double>::infinity();
    bool diverged = false;
};

inline TrialOutcome run_trial(const ProblemSpec& spec, const RequirementDistribution& dist,
                              const std::vector<double>& x0, double scale, const OptimizerTrial& trial,
                              const SolverConfig& cfg) {
    TrialOutcome out;
    std::vector<double> x = x0, g, m(x.size(), 0.0), v(x.size(), 0.0);
    // Descend on the objective divided by P so the step sizes do not depend on
    // the absolute cost/penalty scale.
    const double norm = 1.0 / spec.penalty;
    int quiet = 0;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        const double obj = softplus_objective_and_gradient(spec, dist, x, scale, g);
        bool finite = std::isfinite(obj);
        for (double gi : g) finite = finite && std::isfinite(gi);
        if (!finite) {
            out.diverged = true;
            return out;
        }
        double moved = 0.0, mag = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double gi = g[i] * norm;
            double delta;
            if (trial.method == Method::Momentum) {
                m[i] = cfg.momentum * m[i] + gi;
                delta = trial.learning_rate * m[i];
            } else {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                const double mh = m[i] / (1.0 - std::pow(cfg.beta1, step));
                const double vh = v[i] / (1.0 - std::pow(cfg.beta2, step));
                delta = trial.learning_rate * mh / (std::sqrt(vh) + cfg.adam_epsilon);
            }
            x[i] -= delta;
            moved = std::max(moved, std::abs(delta));
            mag = std::max(mag, std::abs(x[i]));
        }
        if (!std::isfinite(mag)) {
            out.diverged = true;
            return out;
        }
        quiet = moved <= 1e-13 * (1.0 + mag) ? quiet + 1 : 0;
        if (quiet >= 10) break;
    }
    out.objective = softplus_objective(spec, dist, x, scale);
    if (!std::isfinite(out.objective)) out.diverged = true;
    out.x = std::move(x);
    return out;
}

}  // namespace detail

/// Minimizes the expected cost over the free rounds by running every
/// (method, learning rate) in the grid from the same initialization and
/// keeping the lowest final objective (ties to the smaller learning rate).
///
/// Initialization: the first free round aims at the anchor D-hat and each
/// later round's increment is the first increment divided by (s + 1).
inline PlanSolution solve_plan(const ProblemSpec& spec, const RequirementDistribution& dist,
                               const SolverConfig& cfg = {}) {
    spec.validate();
    cfg.validate();
    const std::size_t k = spec.dimension();
    require(dist.dimension() == k, "distribution dimension mismatch");
    require(spec.free_rounds() >= 1, "no free rounds left to plan");

    const Sizes prev = spec.frozen_prefix.empty() ? spec.q0 : spec.frozen_prefix.back();
    Sizes anchor;
    if (cfg.point_estimate) anchor = *cfg.point_estimate;
    else if (k == 1) anchor = {density::quantile(dist, 0.5)};
    else anchor = dist.mean();
    require(anchor.size() == k, "point estimate dimension mismatch");

    double scale = cfg.scale;
    if (scale <= 0.0) {
        scale = 0.0;
        for (std::size_t j = 0; j < k; ++j) scale = std::max({scale, std::abs(anchor[j]), std::abs(prev[j])});
        if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
    }

    std::vector<double> x0;
    for (std::size_t s = 0; s < spec.free_rounds(); ++s)
        for (std::size_t j = 0; j < k; ++j) {
            const double first = std::max(anchor[j] - prev[j], 1e-3 * scale);
            x0.push_back(softplus_inverse(first / (static_cast<double>(s) + 1.0) / scale));
        }
    const double initial = softplus_objective(spec, dist, x0, scale);

    std::vector<detail::TrialOutcome> outcomes(cfg.grid.size());
    parallel_for(cfg.grid.size(), cfg.workers, [&](std::size_t i) {
        outcomes[i] = detail::run_trial(spec, dist, x0, scale, cfg.grid[i], cfg);
    });

    PlanSolution sol;
    sol.diagnostics.initial_objective = initial;
    sol.diagnostics.scale = scale;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].diverged) {
            ++sol.diagnostics.diverged_trials;
            continue;
        }
        if (!best || outcomes[i].objective < outcomes[*best].objective ||
            (outcomes[i].objective == outcomes[*best].objective &&
             cfg.grid[i].learning_rate < cfg.grid[*best].learning_rate))
            best = i;
    }
    std::vector<double> x = x0;
    double objective = initial;
    if (best && outcomes[*best].objective < initial) {
        x = outcomes[*best].x;
        objective = outcomes[*best].objective;
        sol.diagnostics.best_trial = cfg.grid[*best];
    } else {
        sol.diagnostics.no_improvement = true;
    }
    sol.continuous = plan_from_softplus(spec, x, scale);
    sol.objective = objective;
    sol.plan = cfg.round_to_integer ? round_plan(sol.continuous, spec) : sol.continuous;
    return sol;
}

// ---------------------------------------------------------------------------
// Single round in closed form

struct OneRoundSolution {
    bool boundary = false;  // optimal to collect nothing: q1 = q0
    double q1 = 0.0;
    double epsilon = 0.0;   // failure risk 1 - F(q1)
};

/// Single-round optimum via the quantile characterization: find eps with
/// f(F^-1(1 - eps)) = c' / P, where c' = c (1 - F(q0)), keep the root with the lowest one-round cost,
/// and accept it only if the secant condition c/P <= (F(q1) - F(q0)) / (q1 - q0)
/// holds (with c'); otherwise collecting nothing is optimal.
inline OneRoundSolution analytic_one_round(const ProblemSpec& spec, const RequirementDistribution& dist) {
    spec.validate();
    require(spec.dimension() == 1 && dist.dimension() == 1, "analytic_one_round: one source only");
    require(spec.horizon == 1 && spec.frozen_prefix.empty(), "analytic_one_round: needs a fresh one-round spec");
    if (dist.degenerate()) throw AssumptionViolated("cdf is flat over the search region (degenerate density)");

    const double q0 = spec.q0[0], pen = spec.penalty;
    const double f0 = dist.cdf(q0);
    const double eps_max = 1.0 - f0;
    OneRoundSolution boundary{true, q0, eps_max};
    if (eps_max <= 0.0) return boundary;
    // The one-round expected cost charges the increment only when D* > q0, so
    // the per-unit cost is c (1 - F(q0)); with F(q0) = 0 this is plain c.
    const double c = spec.costs[0] * eps_max;
    const double ratio = c / pen;

    auto objective = [&](double q) { return c * (q - q0) + pen * (1.0 - dist.cdf(q)); };
    auto q_of = [&](double eps) { return std::max(q0, density::quantile(dist, std::clamp(1.0 - eps, 1e-300, 1.0 - 1e-16))); };
    auto g = [&](double eps) { return dist.pdf(q_of(eps)) - ratio; };

    constexpr int kScan = 512;
    const double eps_lo = std::max(1e-13, eps_max * 1e-12);
    std::vector<double> eps(kScan), vals(kScan);
    for (int i = 0; i < kScan; ++i) {
        eps[i] = i == kScan - 1 ? eps_max : eps_lo * std::pow(eps_max / eps_lo, static_cast<double>(i) / (kScan - 1));
        vals[i] = g(eps[i]);
    }

    std::optional<double> best_q;
    double best_eps = 0.0, best_obj = std::numeric_limits<double>::infinity();
    for (int i = 0; i + 1 < kScan; ++i) {
        if ((vals[i] > 0.0) == (vals[i + 1] > 0.0) && vals[i] != 0.0) continue;
        double a = eps[i], b = eps[i + 1];
        const bool a_pos = vals[i] > 0.0;
        for (int it = 0; it < 100 && b - a > 1e-15 * b; ++it) {
            const double mid = 0.5 * (a + b);
            if ((g(mid) > 0.0) == a_pos) a = mid;
            else b = mid;
        }
        const double e = 0.5 * (a + b);
        const double q = q_of(e);
        const double obj = objective(q);
        if (obj < best_obj) {
            best_obj = obj;
            best_q = q;
            best_eps = 1.0 - dist.cdf(q);
        }
    }
    if (!best_q || *best_q <= q0) return boundary;
    const double secant = (dist.cdf(*best_q) - f0) / (*best_q - q0);
    if (ratio <= secant) return {false, *best_q, best_eps};
    return boundary;
}

}  // namespace loc::planner
