// simulator.hpp
//
// Ground-truth learning-curve oracles and the round-by-round collection loop
// used to score policies.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "loc/baselines.hpp"
#include "loc/core.hpp"
#include "loc/curves.hpp"
#include "loc/density.hpp"
#include "loc/planner.hpp"

namespace loc::simulator {

// ---------------------------------------------------------------------------
// One source: piecewise linear through the origin, flat after the last knot.

class GroundTruthCurve1D {
public:
    GroundTruthCurve1D(std::vector<double> sizes, std::vector<double> scores)
        : sizes_(std::move(sizes)), scores_(std::move(scores)) {
        require(!sizes_.empty(), "ground truth needs at least one knot");
        require(sizes_.size() == scores_.size(), "ground truth sizes/scores length mismatch");
        require(sizes_.front() > 0.0, "first knot size must be positive");
        for (std::size_t i = 0; i < sizes_.size(); ++i) {
            require(std::isfinite(sizes_[i]) && std::isfinite(scores_[i]), "knots must be finite");
            if (i) {
                require(sizes_[i] > sizes_[i - 1], "knot sizes must be strictly increasing");
                require(scores_[i] >= scores_[i - 1], "knot scores must be non-decreasing");
            }
        }
        // Concavity: slopes (origin segment first) must not increase.
        double prev_slope = scores_[0] / sizes_[0];
        for (std::size_t i = 1; i < sizes_.size(); ++i) {
            const double slope = (scores_[i] - scores_[i - 1]) / (sizes_[i] - sizes_[i - 1]);
            if (slope > prev_slope * (1.0 + 1e-12) + 1e-15) concavity_warning_ = true;
            prev_slope = slope;
        }
    }

    double eval(double q) const {
        require(q >= 0.0, "ground truth evaluated at a negative size");
        if (q <= sizes_.front()) return scores_.front() / sizes_.front() * q;
        if (q >= sizes_.back()) return scores_.back();
        const auto hi = static_cast<std::size_t>(std::lower_bound(sizes_.begin(), sizes_.end(), q) - sizes_.begin());
        if (sizes_[hi] == q) return scores_[hi];
        const std::size_t lo = hi - 1;
        const double slope = (scores_[hi] - scores_[lo]) / (sizes_[hi] - sizes_[lo]);
        return scores_[lo] + slope * (q - sizes_[lo]);
    }

    /// Smallest q >= 0 with eval(q) >= target, or nothing when the final score is lower.
    std::optional<double> requirement(double target) const {
        double q_prev = 0.0, v_prev = 0.0;
        for (std::size_t i = 0; i < sizes_.size(); ++i) {
            if (v_prev >= target) return q_prev;
            if (scores_[i] >= target) {
                const double q = q_prev + (target - v_prev) * (sizes_[i] - q_prev) / (scores_[i] - v_prev);
                // Guard the division against landing a hair short of the target.
                double out = std::min(q, sizes_[i]);
                while (out < sizes_[i] && eval(out) < target) out = std::nextafter(out, sizes_[i]);
                return out;
            }
            q_prev = sizes_[i];
            v_prev = scores_[i];
        }
        if (v_prev >= target) return q_prev;
        return std::nullopt;
    }

    const std::vector<double>& sizes() const { return sizes_; }
    const std::vector<double>& scores() const { return scores_; }
    double max_score() const { return scores_.back(); }
    bool concavity_warning() const { return concavity_warning_; }

private:
    std::vector<double> sizes_;
    std::vector<double> scores_;
    bool concavity_warning_ = false;
};

inline double eval_ground_truth_1d(const GroundTruthCurve1D& curve, double q) { return curve.eval(q); }

// ---------------------------------------------------------------------------
// Two sources: each grid cell is split into the triangle holding its low
// corner (s, t) and the one holding its high corner (s+1, t+1). A point uses
// the low-corner plane when it is at least as close to (s, t) as to
// (s+1, t+1), the high-corner plane otherwise.

struct Plane {
    double a = 0.0, b = 0.0, c = 0.0;
    double operator()(double x, double y) const { return a * x + b * y + c; }
};

struct SurfaceEval {
    double score = 0.0;
    bool clamped = false;     // the query was moved into the grid box
    bool degenerate = false;  // bilinear fallback on a singular cell
};

class GroundTruthSurface2D {
public:
    /// scores[i][j] is the score at (grid_x[i], grid_y[j]).
    GroundTruthSurface2D(std::vector<double> grid_x, std::vector<double> grid_y,
                         std::vector<std::vector<double>> scores)
        : gx_(std::move(grid_x)), gy_(std::move(grid_y)), v_(std::move(scores)) {
        require(gx_.size() >= 2 && gy_.size() >= 2, "surface grid needs at least 2 points per axis");
        require(v_.size() == gx_.size(), "surface score rows must match grid_x");
        for (const auto& row : v_) {
            require(row.size() == gy_.size(), "surface score columns must match grid_y");
            for (double x : row) require(std::isfinite(x), "surface scores must be finite");
        }
        for (std::size_t i = 1; i < gx_.size(); ++i) require(gx_[i] > gx_[i - 1], "grid_x must be strictly increasing");
        for (std::size_t j = 1; j < gy_.size(); ++j) require(gy_[j] > gy_[j - 1], "grid_y must be strictly increasing");
        for (double x : gx_) require(x >= 0.0 && std::isfinite(x), "grid sizes must be finite and >= 0");
        for (double y : gy_) require(y >= 0.0 && std::isfinite(y), "grid sizes must be finite and >= 0");
        for (std::size_t i = 0; i < gx_.size(); ++i)
            for (std::size_t j = 0; j < gy_.size(); ++j) {
                if (i && v_[i][j] < v_[i - 1][j]) monotone_warning_ = true;
                if (j && v_[i][j] < v_[i][j - 1]) monotone_warning_ = true;
            }
    }

    /// Plane through the low-corner or the high-corner triangle of cell (s, t);
    /// nothing when the three points are collinear.
    std::optional<Plane> triangle_plane(std::size_t s, std::size_t t, bool low_corner) const {
        require(s + 1 < gx_.size() && t + 1 < gy_.size(), "cell index out of range");
        std::array<std::array<double, 3>, 3> pts;
        if (low_corner)
            pts = {{{gx_[s], gy_[t], v_[s][t]}, {gx_[s + 1], gy_[t], v_[s + 1][t]}, {gx_[s], gy_[t + 1], v_[s][t + 1]}}};
        else
            pts = {{{gx_[s], gy_[t + 1], v_[s][t + 1]},
                    {gx_[s + 1], gy_[t], v_[s + 1][t]},
                    {gx_[s + 1], gy_[t + 1], v_[s + 1][t + 1]}}};
        Eigen::Matrix3d m;
        Eigen::Vector3d rhs;
        for (int r = 0; r < 3; ++r) {
            m(r, 0) = pts[r][0];
            m(r, 1) = pts[r][1];
            m(r, 2) = 1.0;
            rhs[r] = pts[r][2];
        }
        const auto lu = m.fullPivLu();
        if (!lu.isInvertible()) return std::nullopt;
        const Eigen::Vector3d p = lu.solve(rhs);
        return Plane{p[0], p[1], p[2]};
    }

    SurfaceEval evaluate(double q1, double q2) const {
        SurfaceEval out;
        const double x = std::clamp(q1, gx_.front(), gx_.back());
        const double y = std::clamp(q2, gy_.front(), gy_.back());
        out.clamped = x != q1 || y != q2;
        const std::size_t s = cell_index(gx_, x), t = cell_index(gy_, y);
        const bool low = use_low_corner(s, t, x, y);
        if (auto plane = triangle_plane(s, t, low)) {
            out.score = (*plane)(x, y);
            // Exact at vertices regardless of rounding in the plane solve.
            for (std::size_t i : {s, s + 1})
                for (std::size_t j : {t, t + 1})
                    if (x == gx_[i] && y == gy_[j]) out.score = v_[i][j];
        } else {
            out.degenerate = true;
            const double u = (x - gx_[s]) / (gx_[s + 1] - gx_[s]), w = (y - gy_[t]) / (gy_[t + 1] - gy_[t]);
            out.score = (1 - u) * (1 - w) * v_[s][t] + u * (1 - w) * v_[s + 1][t] + (1 - u) * w * v_[s][t + 1] +
                        u * w * v_[s + 1][t + 1];
        }
        return out;
    }

    double eval(double q1, double q2) const { return evaluate(q1, q2).score; }

    /// The distance rule of the construction, verbatim; ties go to the low corner.
    bool use_low_corner(std::size_t s, std::size_t t, double x, double y) const {
        const double d_low = std::hypot(x - gx_[s], y - gy_[t]);
        const double d_high = std::hypot(x - gx_[s + 1], y - gy_[t + 1]);
        return d_low <= d_high;
    }

    const std::vector<double>& grid_x() const { return gx_; }
    const std::vector<double>& grid_y() const { return gy_; }
    const std::vector<std::vector<double>>& scores() const { return v_; }
    bool monotone_warning() const { return monotone_warning_; }
    double max_score() const {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& row : v_)
            for (double x : row) m = std::max(m, x);
        return m;
    }

    /// Cheapest point of the grid box with eval >= target. The surface is
    /// linear on each (cell, selection region) piece, so the optimum sits at
    /// a vertex of some piece clipped by {plane >= target}.
    std::optional<Sizes> requirement(double target, const Sizes& costs) const {
        require(costs.size() == 2, "surface requirement needs two costs");
        std::optional<Sizes> best;
        double best_cost = std::numeric_limits<double>::infinity();
        auto consider = [&](double x, double y) {
            if (eval(x, y) < target - 1e-9) return;
            const double cost = costs[0] * x + costs[1] * y;
            const Sizes cand{x, y};
            if (!best || cost < best_cost - 1e-12 * std::max(1.0, std::abs(best_cost)) ||
                (std::abs(cost - best_cost) <= 1e-12 * std::max(1.0, std::abs(best_cost)) && cand < *best)) {
                best = cand;
                best_cost = cost;
            }
        };
        for (std::size_t s = 0; s + 1 < gx_.size(); ++s)
            for (std::size_t t = 0; t + 1 < gy_.size(); ++t) {
                // Half-plane |p - low|^2 <= |p - high|^2 written as n.p <= d.
                const double nx = 2.0 * (gx_[s + 1] - gx_[s]), ny = 2.0 * (gy_[t + 1] - gy_[t]);
                const double d = gx_[s + 1] * gx_[s + 1] + gy_[t + 1] * gy_[t + 1] - gx_[s] * gx_[s] - gy_[t] * gy_[t];
                const std::vector<Pt> rect{{gx_[s], gy_[t]}, {gx_[s + 1], gy_[t]}, {gx_[s + 1], gy_[t + 1]}, {gx_[s], gy_[t + 1]}};
                for (bool low : {true, false}) {
                    auto poly = low ? clip(rect, nx, ny, d) : clip(rect, -nx, -ny, -d);
                    if (auto plane = triangle_plane(s, t, low)) {
                        // plane >= target  <=>  -a x - b y <= c - target
                        poly = clip(poly, -plane->a, -plane->b, plane->c - target);
                    }
                    for (const auto& p : poly) consider(p.x, p.y);
                }
                for (std::size_t i : {s, s + 1})
                    for (std::size_t j : {t, t + 1}) consider(gx_[i], gy_[j]);
            }
        return best;
    }

private:
    struct Pt {
        double x, y;
    };

    // Sutherland-Hodgman clip of a convex polygon by {a x + b y <= d}.
    static std::vector<Pt> clip(const std::vector<Pt>& poly, double a, double b, double d) {
        std::vector<Pt> out;
        if (poly.empty()) return out;
        auto inside = [&](const Pt& p) { return a * p.x + b * p.y <= d; };
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const Pt& cur = poly[i];
            const Pt& nxt = poly[(i + 1) % poly.size()];
            const bool ci = inside(cur), ni = inside(nxt);
            if (ci) out.push_back(cur);
            if (ci != ni) {
                const double fc = a * cur.x + b * cur.y - d, fn = a * nxt.x + b * nxt.y - d;
                const double u = fc / (fc - fn);
                out.push_back({cur.x + u * (nxt.x - cur.x), cur.y + u * (nxt.y - cur.y)});
            }
        }
        return out;
    }

    static std::size_t cell_index(const std::vector<double>& g, double v) {
        auto it = std::upper_bound(g.begin(), g.end(), v);
        std::size_t i = it == g.begin() ? 0 : static_cast<std::size_t>(it - g.begin()) - 1;
        return std::min(i, g.size() - 2);
    }

    std::vector<double> gx_, gy_;
    std::vector<std::vector<double>> v_;
    bool monotone_warning_ = false;
};

inline double eval_ground_truth_2d(const GroundTruthSurface2D& surface, double q1, double q2) {
    return surface.eval(q1, q2);
}

using Oracle = std::variant<GroundTruthCurve1D, GroundTruthSurface2D>;

inline std::size_t oracle_dimension(const Oracle& o) { return std::holds_alternative<GroundTruthCurve1D>(o) ? 1 : 2; }

inline double eval_oracle(const Oracle& o, const Sizes& q) {
    require(q.size() == oracle_dimension(o), "oracle evaluated with the wrong dimension");
    if (const auto* c = std::get_if<GroundTruthCurve1D>(&o)) return c->eval(q[0]);
    return std::get<GroundTruthSurface2D>(o).eval(q[0], q[1]);
}

inline double oracle_max_score(const Oracle& o) {
    return std::visit([](const auto& x) { return x.max_score(); }, o);
}

/// Cheapest amount meeting `target` on the oracle (the smallest size for one
/// source); nothing when the oracle never reaches it.
inline std::optional<Sizes> true_requirement(const Oracle& o, double target, const Sizes& costs) {
    require(std::isfinite(target), "target must be finite");
    require(costs.size() == oracle_dimension(o), "costs dimension mismatch");
    if (const auto* c = std::get_if<GroundTruthCurve1D>(&o)) {
        auto q = c->requirement(target);
        if (!q) return std::nullopt;
        return Sizes{*q};
    }
    return std::get<GroundTruthSurface2D>(o).requirement(target, costs);
}

// ---------------------------------------------------------------------------
// Policies

enum class PolicyKind { Loc, RegressionPoint, RegressionCorrected };

inline std::vector<double> default_bandwidths() {
    std::vector<double> h;
    for (int i = 1; i <= 20; ++i) h.push_back(200.0 * i);
    return h;
}

struct LocSettings {
    std::size_t resamples = 500;
    density::CensorPolicy censor = density::CensorPolicy::CapAtBound;
    std::vector<double> bandwidths = default_bandwidths();
    std::vector<std::size_t> components{4, 5, 6, 7, 8, 9, 10};
    planner::SolverConfig solver;
    std::size_t workers = 1;
};

struct Policy {
    PolicyKind kind = PolicyKind::Loc;
    curves::CurveFamily family = curves::CurveFamily::power_law();
    double tau = 0.0;
    LocSettings loc;

    static Policy loc_policy(curves::CurveFamily fam, LocSettings s = {}) { return {PolicyKind::Loc, fam, 0.0, std::move(s)}; }
    static Policy regression(curves::CurveFamily fam) { return {PolicyKind::RegressionPoint, fam, 0.0, {}}; }
    static Policy corrected(curves::CurveFamily fam, double tau) {
        require(tau >= 0.0, "tau must be non-negative");
        return {PolicyKind::RegressionCorrected, fam, tau, {}};
    }

    std::string name() const {
        switch (kind) {
            case PolicyKind::Loc: return "loc";
            case PolicyKind::RegressionPoint: return "regression";
            case PolicyKind::RegressionCorrected: return "corrected";
        }
        return "?";
    }
};

struct SimulationConfig {
    std::size_t subsample_count = 10;  // R
    double noise_sigma = 0.0;
    double cap_factor = 100.0;         // policies search up to cap_factor x the largest observed size
};

// ---------------------------------------------------------------------------
// Runs

struct RoundStep {
    int round = 0;
    Sizes requested;
    Sizes realized;
    double observed_score = 0.0;
};

enum class RunStatus { Completed, PolicyFailure };

struct RunRecord {
    planner::ProblemSpec spec;
    std::vector<RoundStep> trajectory;
    int terminated_round = 0;
    bool met_target = false;
    double total_paid = 0.0;
    std::optional<Sizes> d_star;  // empty when the oracle never reaches the target
    Sizes final_amount;
    RunStatus status = RunStatus::Completed;
    std::string failure_message;
    bool clamped = false;         // some oracle query left the grid box
};

/// Collection cost c'(q_final - q0).
inline double collection_cost(const RunRecord& r) {
    double s = 0.0;
    for (std::size_t k = 0; k < r.final_amount.size(); ++k) s += r.spec.costs[k] * (r.final_amount[k] - r.spec.q0[k]);
    return s;
}

/// c'(q_T - q0) / c'(D* - q0) - 1 for a successful run; 0 when nothing had
/// to be collected and nothing was.
inline std::optional<double> cost_ratio(const RunRecord& r) {
    if (!r.met_target || !r.d_star) return std::nullopt;
    const double num = collection_cost(r);
    double den = 0.0;
    for (std::size_t k = 0; k < r.d_star->size(); ++k) den += r.spec.costs[k] * ((*r.d_star)[k] - r.spec.q0[k]);
    if (den <= 0.0) return num <= 0.0 ? std::optional<double>(0.0) : std::nullopt;
    return num / den - 1.0;
}

inline std::optional<double> points_ratio(const RunRecord& r) {
    if (!r.met_target || !r.d_star || r.final_amount.size() != 1 || (*r.d_star)[0] <= 0.0) return std::nullopt;
    return r.final_amount[0] / (*r.d_star)[0];
}

namespace detail {

// Deterministic oracle with optional seeded observation noise; repeated
// queries of the same amount return the cached observation.
class Observer {
public:
    Observer(const Oracle& oracle, double sigma, std::uint64_t seed)
        : oracle_(oracle), sigma_(sigma), gen_(substream(seed, "noise")) {}

    double observe(const Sizes& q, bool& clamped) {
        auto it = cache_.find(q);
        if (it != cache_.end()) return it->second;
        if (const auto* s = std::get_if<GroundTruthSurface2D>(&oracle_)) clamped = clamped || s->evaluate(q[0], q[1]).clamped;
        double v = eval_oracle(oracle_, q);
        if (sigma_ > 0.0) v += std::normal_distribution<double>(0.0, sigma_)(gen_);
        cache_.emplace(q, v);
        return v;
    }

private:
    const Oracle& oracle_;
    double sigma_;
    std::mt19937_64 gen_;
    std::map<Sizes, double> cache_;
};

inline Sizes policy_cap(const curves::RegressionSet& data, double factor) {
    Sizes cap = data.max_sizes();
    for (auto& c : cap) c = std::max(c, 1.0) * factor;
    return cap;
}

inline Sizes loc_request(const Policy& policy, const curves::RegressionSet& data, const planner::ProblemSpec& spec,
                         const Sizes& current, const SimulationConfig& sim, std::uint64_t round_seed) {
    const std::size_t k = spec.dimension();
    const auto& loc = policy.loc;
    density::BootstrapConfig boot(policy.family, loc.resamples, derive_seed(round_seed, "bootstrap"));
    boot.censor = loc.censor;
    boot.cap_factor = sim.cap_factor;
    boot.workers = loc.workers;
    const auto estimates = density::bootstrap_requirements(data, spec.target, spec.costs, boot);

    std::optional<density::RequirementDistribution> dist;
    if (k == 1) {
        std::vector<double> pts;
        pts.reserve(estimates.estimates.size());
        for (const auto& e : estimates.estimates) pts.push_back(e[0]);
        dist = density::fit_kde(pts, loc.bandwidths).distribution;
    } else {
        std::vector<std::size_t> grid;
        for (auto c : loc.components)
            if (c <= estimates.estimates.size()) grid.push_back(c);
        if (grid.empty()) grid.push_back(1);
        dist = density::fit_gmm(estimates.estimates, grid, derive_seed(round_seed, "gmm-init")).distribution;
    }

    planner::SolverConfig solver = loc.solver;
    const auto point = baselines::regression_point_estimate(data, spec.target, spec.costs, policy.family,
                                                            policy_cap(data, sim.cap_factor),
                                                            derive_seed(round_seed, "tie-break"));
    if (point.reachable()) solver.point_estimate = *point.amount;
    const auto sol = planner::solve_plan(spec, *dist, solver);
    return elementwise_max(sol.plan.schedule[spec.frozen_prefix.size()], current);
}

}  // namespace detail

/// Regression statistics at `amount`: fractions r/R of it (per source on an
/// R x R grid when there are two sources).
inline std::vector<Sizes> subsample_points(const Sizes& amount, std::size_t r_count) {
    require(r_count >= 1, "subsample count must be >= 1");
    std::vector<Sizes> out;
    const double rr = static_cast<double>(r_count);
    if (amount.size() == 1) {
        for (std::size_t r = 1; r <= r_count; ++r) out.push_back({amount[0] * static_cast<double>(r) / rr});
    } else {
        require(amount.size() == 2, "subsampling supports one or two sources");
        for (std::size_t r1 = 1; r1 <= r_count; ++r1)
            for (std::size_t r2 = 1; r2 <= r_count; ++r2)
                out.push_back({amount[0] * static_cast<double>(r1) / rr, amount[1] * static_cast<double>(r2) / rr});
    }
    return out;
}

/// One simulated collection problem. Each round rebuilds the regression set
/// from sub-sampled statistics of the current amount plus every realized
/// round, asks the policy for a cumulative amount (rounded up, never below
/// what is held), pays for the increment and observes the oracle. The run
/// stops on the observed target or after T rounds; the penalty is charged
/// when the oracle's score at the final amount is below the target.
inline RunRecord run_collection(const planner::ProblemSpec& spec, const Oracle& oracle, const Policy& policy,
                                std::uint64_t seed, const SimulationConfig& sim = {}) {
    spec.validate();
    require(spec.frozen_prefix.empty(), "run_collection starts from a fresh spec");
    require(oracle_dimension(oracle) == spec.dimension(), "oracle and spec dimensions differ");
    require(policy.family.sources() == spec.dimension(), "policy family and spec dimensions differ");
    require(sim.subsample_count >= 1 && sim.noise_sigma >= 0.0 && sim.cap_factor > 0.0, "invalid simulation config");

    RunRecord rec;
    rec.spec = spec;
    rec.d_star = true_requirement(oracle, spec.target, spec.costs);
    rec.final_amount = spec.q0;
    detail::Observer observer(oracle, sim.noise_sigma, seed);

    Sizes current = spec.q0;
    std::vector<Sizes> realized;
    double observed = observer.observe(current, rec.clamped);

    if (observed < spec.target) {
        for (int t = 1; t <= spec.horizon; ++t) {
            std::vector<curves::CurveSample> samples;
            std::vector<Sizes> seen;
            auto add = [&](const Sizes& q) {
                if (total(q) <= 0.0 || std::find(seen.begin(), seen.end(), q) != seen.end()) return;
                seen.push_back(q);
                samples.push_back({q, observer.observe(q, rec.clamped), 1.0});
            };
            for (const auto& q : subsample_points(current, sim.subsample_count)) add(q);
            for (const auto& q : realized) add(q);
            const auto data = curves::RegressionSet::with_doubling_weights(std::move(samples));

            planner::ProblemSpec round_spec = spec;
            round_spec.frozen_prefix = realized;
            const std::uint64_t round_seed = derive_seed(seed, "round", static_cast<std::uint64_t>(t));
            const Sizes cap = detail::policy_cap(data, sim.cap_factor);

            Sizes request;
            try {
                switch (policy.kind) {
                    case PolicyKind::Loc:
                        request = detail::loc_request(policy, data, round_spec, current, sim, round_seed);
                        break;
                    case PolicyKind::RegressionPoint:
                        request = baselines::regression_point_policy(data, spec.target, spec.costs, policy.family,
                                                                     current, cap, derive_seed(round_seed, "tie-break"));
                        break;
                    case PolicyKind::RegressionCorrected:
                        request = baselines::corrected_policy(data, spec.target, spec.costs, policy.family, policy.tau,
                                                              current, cap, derive_seed(round_seed, "tie-break"));
                        break;
                }
            } catch (const std::exception& e) {
                rec.status = RunStatus::PolicyFailure;
                rec.failure_message = e.what();
                rec.terminated_round = t;
                break;
            }

            Sizes next(current.size());
            for (std::size_t k = 0; k < next.size(); ++k) {
                const double r = std::isfinite(request[k]) ? request[k] : current[k];
                next[k] = std::max(std::ceil(r - 1e-9 * std::max(1.0, std::abs(r))), current[k]);
            }
            current = next;
            realized.push_back(current);
            observed = observer.observe(current, rec.clamped);
            rec.trajectory.push_back({t, request, current, observed});
            rec.terminated_round = t;
            if (observed >= spec.target) break;
        }
    }

    rec.final_amount = current;
    rec.met_target = eval_oracle(oracle, current) >= spec.target;
    rec.total_paid = collection_cost(rec);
    if (!rec.met_target) rec.total_paid += spec.penalty;
    return rec;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
    std::size_t runs = 0;
    std::size_t successes = 0;
    std::size_t trimmed = 0;
    double failure_rate = 0.0;
    std::optional<double> cost_ratio;    // mean over kept successes
    std::optional<double> points_ratio;  // one source only
};

/// Linear-interpolation percentile (p in [0, 100]) of a non-empty sample.
inline double percentile(std::vector<double> xs, double p) {
    require(!xs.empty(), "percentile of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = p / 100.0 * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

/// Failure rate over all runs; cost and points ratios averaged over the
/// successful runs whose collection cost does not exceed the
/// `trim_percentile` of the successful runs' collection costs.
inline MetricsReport aggregate_metrics(const std::vector<RunRecord>& records, double trim_percentile) {
    require(!records.empty(), "aggregate_metrics needs at least one record");
    require(trim_percentile >= 0.0 && trim_percentile <= 100.0, "trim percentile must lie in [0, 100]");
    MetricsReport m;
    m.runs = records.size();
    std::vector<const RunRecord*> ok;
    for (const auto& r : records)
        if (r.met_target && cost_ratio(r)) ok.push_back(&r);
    std::size_t failures = 0;
    for (const auto& r : records) failures += r.met_target ? 0 : 1;
    m.failure_rate = static_cast<double>(failures) / static_cast<double>(records.size());
    m.successes = records.size() - failures;
    if (ok.empty()) return m;

    std::vector<double> costs;
    for (const auto* r : ok) costs.push_back(collection_cost(*r));
    const double cut = percentile(costs, trim_percentile);
    double sum_cost = 0.0, sum_points = 0.0;
    std::size_t kept = 0, kept_points = 0;
    for (const auto* r : ok) {
        if (collection_cost(*r) > cut) {
            ++m.trimmed;
            continue;
        }
        sum_cost += *cost_ratio(*r);
        ++kept;
        if (auto p = points_ratio(*r)) {
            sum_points += *p;
            ++kept_points;
        }
    }
    if (kept) m.cost_ratio = sum_cost / static_cast<double>(kept);
    if (kept_points) m.points_ratio = sum_points / static_cast<double>(kept_points);
    return m;
}

}  // namespace loc::simulator
