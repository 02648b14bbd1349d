// curves.hpp
//
// Parametric learning-curve families, weighted Levenberg-Marquardt fitting
// and inversion of a fitted curve into a data-requirement point estimate.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loc/core.hpp"

namespace loc::curves {

enum class FamilyKind { PowerLaw, Logarithmic, Arctan, AlgebraicRoot, AdditivePowerLaw };

/// A learning-curve family. Scalar families take one data source; the
/// additive power law sums one power-law term per source plus a shared bias.
class CurveFamily {
public:
    static CurveFamily power_law() { return {FamilyKind::PowerLaw, 1}; }
    static CurveFamily logarithmic() { return {FamilyKind::Logarithmic, 1}; }
    static CurveFamily arctan() { return {FamilyKind::Arctan, 1}; }
    static CurveFamily algebraic_root() { return {FamilyKind::AlgebraicRoot, 1}; }
    static CurveFamily additive_power_law(std::size_t sources) {
        require(sources >= 1, "additive power law needs at least one source");
        return {FamilyKind::AdditivePowerLaw, sources};
    }

    /// Accepts "power", "log", "arctan", "algebraic" and "additive".
    static CurveFamily from_name(std::string_view name, std::size_t sources = 1) {
        if (name == "additive" || (name == "power" && sources > 1)) return additive_power_law(sources);
        require(sources == 1, "family '" + std::string(name) + "' is single-source");
        if (name == "power") return power_law();
        if (name == "log" || name == "logarithmic") return logarithmic();
        if (name == "arctan") return arctan();
        if (name == "algebraic" || name == "algebraic_root") return algebraic_root();
        throw PreconditionError("unknown curve family '" + std::string(name) + "'");
    }

    FamilyKind kind() const { return kind_; }
    std::size_t sources() const { return sources_; }
    std::size_t parameter_count() const {
        return kind_ == FamilyKind::AdditivePowerLaw ? 2 * sources_ + 1 : 3;
    }

    std::string name() const {
        switch (kind_) {
            case FamilyKind::PowerLaw: return "power";
            case FamilyKind::Logarithmic: return "log";
            case FamilyKind::Arctan: return "arctan";
            case FamilyKind::AlgebraicRoot: return "algebraic";
            case FamilyKind::AdditivePowerLaw: return "additive";
        }
        return "?";
    }

    /// Product terms start at 1 and bias terms at 0. The logarithm's inner
    /// offset starts at 1 so the curve is defined at q = 0.
    std::vector<double> default_init() const {
        switch (kind_) {
            case FamilyKind::PowerLaw: return {1.0, 1.0, 0.0};
            case FamilyKind::Logarithmic: return {1.0, 1.0, 0.0};
            case FamilyKind::Arctan: return {1.0, 0.0, 0.0};
            case FamilyKind::AlgebraicRoot: return {1.0, 1.0, 0.0};
            case FamilyKind::AdditivePowerLaw: {
                std::vector<double> init(parameter_count(), 1.0);
                init.back() = 0.0;
                return init;
            }
        }
        return {};
    }

    friend bool operator==(const CurveFamily&, const CurveFamily&) = default;

private:
    CurveFamily(FamilyKind kind, std::size_t sources) : kind_(kind), sources_(sources) {}

    FamilyKind kind_;
    std::size_t sources_;
};

struct RegressionModel {
    CurveFamily family = CurveFamily::power_law();
    std::vector<double> theta;
};

namespace detail {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// q^p with 0^p defined for p >= 0 only.
inline double safe_pow(double q, double p) {
    if (q == 0.0) return p > 0.0 ? 0.0 : (p == 0.0 ? 1.0 : kNaN);
    return std::pow(q, p);
}

// NaN wherever the formula is undefined or non-finite.
inline double raw_eval(const CurveFamily& family, std::span<const double> theta, std::span<const double> q) {
    double v = kNaN;
    switch (family.kind()) {
        case FamilyKind::PowerLaw:
            v = theta[0] * safe_pow(q[0], theta[1]) + theta[2];
            break;
        case FamilyKind::Logarithmic: {
            const double arg = q[0] + theta[1];
            v = arg > 0.0 ? theta[0] * std::log(arg) + theta[2] : kNaN;
            break;
        }
        case FamilyKind::Arctan:
            v = (200.0 / std::numbers::pi) * std::atan(theta[0] * (std::numbers::pi / 2.0) * q[0] + theta[1]) +
                theta[2];
            break;
        case FamilyKind::AlgebraicRoot: {
            if (theta[1] == 0.0) return kNaN;
            const double denom = std::pow(1.0 + safe_pow(std::abs(theta[0] * q[0]), theta[1]), 1.0 / theta[1]);
            v = 100.0 * q[0] / denom + theta[2];
            break;
        }
        case FamilyKind::AdditivePowerLaw: {
            v = theta[2 * family.sources()];
            for (std::size_t k = 0; k < family.sources(); ++k)
                v += theta[2 * k] * safe_pow(q[k], theta[2 * k + 1]);
            break;
        }
    }
    return std::isfinite(v) ? v : kNaN;
}

inline void check_shape(const CurveFamily& family, std::size_t theta_size, std::size_t q_size) {
    require(theta_size == family.parameter_count(), "parameter vector length does not match the family");
    require(q_size == family.sources(), "size vector length does not match the family's source count");
}

}  // namespace detail

/// Score predicted by `family` with parameters `theta` at data amounts `q`.
inline double eval_curve(const CurveFamily& family, std::span<const double> theta, const Sizes& q) {
    detail::check_shape(family, theta.size(), q.size());
    for (double x : q) require(x >= 0.0, "eval_curve: sizes must be non-negative");
    const double v = detail::raw_eval(family, theta, q);
    if (std::isnan(v)) throw DomainError("curve '" + family.name() + "' is undefined at the requested size");
    return v;
}

inline double eval_curve(const RegressionModel& model, const Sizes& q) {
    return eval_curve(model.family, model.theta, q);
}

// ---------------------------------------------------------------------------
// Regression data

struct CurveSample {
    Sizes sizes;
    double score = 0.0;
    double weight = 1.0;
};

/// Normalized doubling weights: w[i+1] / w[i] == 2, sum == 1. The largest
/// weight is anchored at 1 before normalization so long sets cannot overflow.
inline std::vector<double> doubling_weights(std::size_t n) {
    std::vector<double> w(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = std::ldexp(1.0, static_cast<int>(i) - static_cast<int>(n - 1));
        sum += w[i];
    }
    for (auto& x : w) x = std::max(x / sum, std::numeric_limits<double>::min());
    return w;
}

class RegressionSet {
public:
    explicit RegressionSet(std::vector<CurveSample> samples) : samples_(std::move(samples)) {
        require(!samples_.empty(), "regression set must not be empty");
        sources_ = samples_.front().sizes.size();
        require(sources_ >= 1, "regression samples need at least one size");
        bool any_positive = false;
        for (const auto& s : samples_) {
            require(s.sizes.size() == sources_, "all regression samples must share the same source count");
            for (double q : s.sizes) require(q >= 0.0 && std::isfinite(q), "sample sizes must be finite and >= 0");
            require(std::isfinite(s.score), "sample scores must be finite");
            require(s.weight > 0.0, "sample weights must be positive");
            if (total(s.sizes) > 0.0) any_positive = true;
        }
        require(any_positive, "regression set needs a sample with positive total size");
    }

    /// Orders samples by total size (stable) and assigns doubling weights.
    static RegressionSet with_doubling_weights(std::vector<CurveSample> samples) {
        std::stable_sort(samples.begin(), samples.end(),
                         [](const CurveSample& a, const CurveSample& b) { return total(a.sizes) < total(b.sizes); });
        const auto w = doubling_weights(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) samples[i].weight = w[i];
        return RegressionSet(std::move(samples));
    }

    const std::vector<CurveSample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    std::size_t source_count() const { return sources_; }

    /// Largest observed amount per source.
    Sizes max_sizes() const {
        Sizes m(sources_, 0.0);
        for (const auto& s : samples_)
            for (std::size_t k = 0; k < sources_; ++k) m[k] = std::max(m[k], s.sizes[k]);
        return m;
    }

private:
    std::vector<CurveSample> samples_;
    std::size_t sources_ = 0;
};

// ---------------------------------------------------------------------------
// Fitting

struct FitConfig {
    int max_iterations = 200;
    double initial_damping = 1e-3;
    double damping_factor = 10.0;
    double relative_tolerance = 1e-10;   // on the relative loss decrease of an accepted step
    double gradient_tolerance = 1e-12;   // on |grad|_inf / (1 + loss)
    double jacobian_step = 1e-6;         // relative central-difference step
    double max_damping = 1e20;
    bool geodesic_acceleration = true;
    double geodesic_step = 0.1;          // finite-difference step along the velocity
    double geodesic_ratio = 0.75;        // skip the correction when 2|a|/|v| exceeds this
};

struct FitResult {
    RegressionModel model;
    bool converged = false;
    int iterations = 0;
    double loss = 0.0;
};

namespace detail {

// Residuals score - prediction; false if the curve is undefined anywhere.
inline bool residuals(const CurveFamily& family, const std::vector<double>& theta, const RegressionSet& data,
                      Eigen::VectorXd& out) {
    const auto& samples = data.samples();
    out.resize(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double v = raw_eval(family, theta, samples[i].sizes);
        if (std::isnan(v)) return false;
        out[static_cast<Eigen::Index>(i)] = samples[i].score - v;
    }
    return true;
}

inline double weighted_loss(const Eigen::VectorXd& r, const Eigen::VectorXd& w) {
    return (w.array() * r.array().square()).sum();
}

// Central-difference Jacobian of the predictions; falls back to one-sided
// differences next to a domain boundary.
inline Eigen::MatrixXd prediction_jacobian(const CurveFamily& family, const std::vector<double>& theta,
                                           const RegressionSet& data, double rel_step) {
    const auto& samples = data.samples();
    const auto n = static_cast<Eigen::Index>(samples.size());
    const auto p = static_cast<Eigen::Index>(theta.size());
    Eigen::MatrixXd jac(n, p);
    std::vector<double> plus = theta, minus = theta;
    for (Eigen::Index j = 0; j < p; ++j) {
        const double h = rel_step * std::max(1.0, std::abs(theta[static_cast<std::size_t>(j)]));
        plus[static_cast<std::size_t>(j)] = theta[static_cast<std::size_t>(j)] + h;
        minus[static_cast<std::size_t>(j)] = theta[static_cast<std::size_t>(j)] - h;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& q = samples[static_cast<std::size_t>(i)].sizes;
            const double fp = raw_eval(family, plus, q);
            const double fm = raw_eval(family, minus, q);
            if (!std::isnan(fp) && !std::isnan(fm)) {
                jac(i, j) = (fp - fm) / (2.0 * h);
            } else {
                const double f0 = raw_eval(family, theta, q);
                if (!std::isnan(fp) && !std::isnan(f0)) jac(i, j) = (fp - f0) / h;
                else if (!std::isnan(fm) && !std::isnan(f0)) jac(i, j) = (f0 - fm) / h;
                else jac(i, j) = 0.0;
            }
        }
        plus[static_cast<std::size_t>(j)] = theta[static_cast<std::size_t>(j)];
        minus[static_cast<std::size_t>(j)] = theta[static_cast<std::size_t>(j)];
    }
    return jac;
}

}  // namespace detail

/// Weighted least-squares loss sum_i w_i (score_i - v(q_i; theta))^2.
inline double fit_loss(const CurveFamily& family, const std::vector<double>& theta, const RegressionSet& data) {
    Eigen::VectorXd r;
    if (!detail::residuals(family, theta, data, r)) return std::numeric_limits<double>::infinity();
    double loss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        loss += data.samples()[i].weight * r[static_cast<Eigen::Index>(i)] * r[static_cast<Eigen::Index>(i)];
    return loss;
}

/// Gradient of fit_loss with respect to theta (Jacobian-based, as the fitter sees it).
inline std::vector<double> fit_loss_gradient(const CurveFamily& family, const std::vector<double>& theta,
                                             const RegressionSet& data, double rel_step = 1e-6) {
    Eigen::VectorXd r;
    if (!detail::residuals(family, theta, data, r)) throw DomainError("fit_loss_gradient: curve undefined on data");
    Eigen::VectorXd w(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) w[static_cast<Eigen::Index>(i)] = data.samples()[i].weight;
    const Eigen::MatrixXd jac = detail::prediction_jacobian(family, theta, data, rel_step);
    const Eigen::VectorXd g = -2.0 * jac.transpose() * (w.array() * r.array()).matrix();
    return {g.data(), g.data() + g.size()};
}

/// Damped Gauss-Newton (Marquardt) fit of `family` to `data` from `init`.
/// Non-convergence is reported through the result, never thrown.
inline FitResult fit_curve(const CurveFamily& family, const RegressionSet& data, std::vector<double> init,
                           const FitConfig& cfg = {}) {
    require(init.size() == family.parameter_count(), "fit_curve: init length does not match the family");
    require(data.source_count() == family.sources(), "fit_curve: data source count does not match the family");

    const auto n = static_cast<Eigen::Index>(data.size());
    const auto p = static_cast<Eigen::Index>(init.size());
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = data.samples()[static_cast<std::size_t>(i)].weight;

    std::vector<double> theta = std::move(init);
    Eigen::VectorXd r;
    if (!detail::residuals(family, theta, data, r))
        throw DomainError("fit_curve: curve '" + family.name() + "' undefined on the data at the initial parameters");
    double loss = detail::weighted_loss(r, w);
    double lambda = cfg.initial_damping;

    FitResult result;
    result.model = {family, theta};
    int it = 0;
    bool converged = false;
    for (; it < cfg.max_iterations && !converged; ++it) {
        if (loss == 0.0) {
            converged = true;
            break;
        }
        const Eigen::MatrixXd jac = detail::prediction_jacobian(family, theta, data, cfg.jacobian_step);
        const Eigen::MatrixXd jw = jac.transpose() * w.asDiagonal();
        const Eigen::MatrixXd normal = jw * jac;
        const Eigen::VectorXd rhs = jw * r;
        if (2.0 * rhs.cwiseAbs().maxCoeff() <= cfg.gradient_tolerance * (1.0 + loss)) {
            converged = true;
            break;
        }
        Eigen::VectorXd diag = normal.diagonal();
        const double floor = std::max(diag.maxCoeff(), 1.0) * 1e-12;
        for (Eigen::Index j = 0; j < p; ++j) diag[j] = std::max(diag[j], floor);

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = normal;
            damped.diagonal() += lambda * diag;
            const auto solver = damped.ldlt();
            Eigen::VectorXd step = solver.solve(rhs);
            // Geodesic acceleration: a second-order correction along the step
            // that lets the iteration follow curved valleys of the loss.
            if (cfg.geodesic_acceleration && step.allFinite()) {
                std::vector<double> probe = theta;
                for (Eigen::Index j = 0; j < p; ++j)
                    probe[static_cast<std::size_t>(j)] += cfg.geodesic_step * step[j];
                Eigen::VectorXd probe_r;
                if (detail::residuals(family, probe, data, probe_r)) {
                    const double h = cfg.geodesic_step;
                    const Eigen::VectorXd curvature = (2.0 / h) * ((r - probe_r) / h - jac * step);
                    const Eigen::VectorXd accel = -solver.solve(jw * curvature);
                    const double ratio = std::sqrt((accel.array().square() * diag.array()).sum() /
                                                   (step.array().square() * diag.array()).sum());
                    if (accel.allFinite() && 2.0 * ratio <= cfg.geodesic_ratio) {
                        step += 0.5 * accel;
                    }
                }
            }
            std::vector<double> trial = theta;
            for (Eigen::Index j = 0; j < p; ++j) trial[static_cast<std::size_t>(j)] += step[j];
            Eigen::VectorXd trial_r;
            const bool finite_step = step.allFinite();
            if (finite_step && detail::residuals(family, trial, data, trial_r)) {
                const double trial_loss = detail::weighted_loss(trial_r, w);
                if (trial_loss < loss) {
                    const double rel = (loss - trial_loss) / loss;
                    theta = std::move(trial);
                    r = std::move(trial_r);
                    loss = trial_loss;
                    lambda = std::max(lambda / cfg.damping_factor, 1e-15);
                    accepted = true;
                    if (rel < cfg.relative_tolerance) converged = true;
                    continue;
                }
            }
            lambda *= cfg.damping_factor;
            if (lambda > cfg.max_damping) {
                // No descent step exists at working precision: a stationary point.
                converged = true;
                break;
            }
        }
    }
    result.model.theta = theta;
    result.converged = converged;
    result.iterations = it;
    result.loss = loss;
    return result;
}

inline FitResult fit_curve(const CurveFamily& family, const RegressionSet& data, const FitConfig& cfg = {}) {
    return fit_curve(family, data, family.default_init(), cfg);
}

// ---------------------------------------------------------------------------
// Inversion

struct Inversion {
    std::optional<Sizes> amount;  // empty when the target is unreachable within the bound
    bool non_monotone = false;    // the fitted curve decreases somewhere on the search bracket

    bool reachable() const { return amount.has_value(); }
};

namespace detail {

struct ScalarSearch {
    std::optional<double> root;
    bool non_monotone = false;
};

// Smallest x in [lo, hi] with h(x) >= target: geometric scan for the first
// reaching point, then bisection to `rel_tol`. h may return NaN (undefined).
template <class H>
ScalarSearch smallest_reaching(H&& h, double lo, double hi, double target, double rel_tol) {
    constexpr int kScan = 65;
    ScalarSearch out;
    std::vector<double> xs(kScan), vs(kScan);
    const double span = hi - lo;
    xs[0] = lo;
    for (int j = 1; j < kScan; ++j) {
        const double g = std::pow(10.0, -12.0 + 12.0 * (j - 1) / (kScan - 2));
        xs[j] = j == kScan - 1 ? hi : lo + span * g;
    }
    double prev = std::numeric_limits<double>::quiet_NaN();
    int first = -1;
    for (int j = 0; j < kScan; ++j) {
        vs[j] = h(xs[j]);
        if (!std::isnan(vs[j]) && !std::isnan(prev) && vs[j] < prev - 1e-12 * std::max(1.0, std::abs(prev)))
            out.non_monotone = true;
        if (!std::isnan(vs[j])) prev = vs[j];
        if (first < 0 && !std::isnan(vs[j]) && vs[j] >= target) first = j;
    }
    if (first < 0) return out;
    if (first == 0) {
        out.root = xs[0];
        return out;
    }
    double a = xs[first - 1], b = xs[first];
    for (int iter = 0; iter < 200 && (b - a) > rel_tol * std::max(std::abs(b), 1e-300); ++iter) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b) break;
        const double v = h(mid);
        if (!std::isnan(v) && v >= target) b = mid;
        else a = mid;
    }
    out.root = b;
    return out;
}

inline std::size_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return static_cast<std::size_t>(std::llround(r));
}

inline void simplex_points(std::size_t parts, std::size_t divisions, std::vector<std::size_t>& current,
                           std::size_t remaining, std::vector<std::vector<double>>& out) {
    if (current.size() + 1 == parts) {
        current.push_back(remaining);
        std::vector<double> w(parts);
        for (std::size_t k = 0; k < parts; ++k) w[k] = static_cast<double>(current[k]) / static_cast<double>(divisions);
        out.push_back(std::move(w));
        current.pop_back();
        return;
    }
    for (std::size_t i = 0; i <= remaining; ++i) {
        current.push_back(i);
        simplex_points(parts, divisions, current, remaining - i, out);
        current.pop_back();
    }
}

}  // namespace detail

/// Smallest data amount whose predicted score reaches `target`.
///
/// K = 1: closed form for increasing power laws, otherwise a geometric scan
/// plus bisection to 1e-9 relative. K >= 2: minimizes c'q subject to the
/// curve reaching the target over [0, q_max] by searching over cost-simplex
/// directions (for a direction w the amount q(s) = min(s w / c, q_max) is
/// raised until the target is met). The coarse simplex grid breaks ties by a
/// seeded uniform draw, then a pairwise pattern search polishes the direction.
inline Inversion invert_curve(const RegressionModel& model, double target, const Sizes& costs, const Sizes& q_max,
                              std::uint64_t tie_seed = 0) {
    const auto& family = model.family;
    const std::size_t k = family.sources();
    require(std::isfinite(target), "invert_curve: target must be finite");
    require(model.theta.size() == family.parameter_count(), "invert_curve: parameter vector length mismatch");
    require(costs.size() == k && q_max.size() == k, "invert_curve: costs/q_max dimension mismatch");
    for (std::size_t i = 0; i < k; ++i) {
        require(costs[i] > 0.0, "invert_curve: costs must be positive");
        require(q_max[i] > 0.0, "invert_curve: q_max must be positive");
    }
    const auto& th = model.theta;
    Inversion out;

    if (k == 1) {
        if (family.kind() == FamilyKind::PowerLaw && th[0] * th[1] > 0.0) {
            // Strictly increasing on q > 0: invert in closed form.
            const double sup = th[1] > 0.0 ? std::numeric_limits<double>::infinity() : th[2];
            const double inf = th[1] > 0.0 ? th[2] : -std::numeric_limits<double>::infinity();
            if (target <= inf) {
                out.amount = Sizes{0.0};
                return out;
            }
            if (target >= sup) return out;
            double q = std::pow((target - th[2]) / th[0], 1.0 / th[1]);
            for (int i = 0; i < 64 && detail::raw_eval(family, th, std::span<const double>(&q, 1)) < target; ++i)
                q = std::nextafter(q, std::numeric_limits<double>::infinity());
            if (!(q <= q_max[0])) return out;
            out.amount = Sizes{q};
            return out;
        }
        const double lo = family.kind() == FamilyKind::Logarithmic ? std::max(0.0, -th[1]) : 0.0;
        auto h = [&](double q) { return detail::raw_eval(family, th, std::span<const double>(&q, 1)); };
        const auto found = detail::smallest_reaching(h, lo, q_max[0], target, 1e-9);
        out.non_monotone = found.non_monotone;
        if (found.root) out.amount = Sizes{*found.root};
        return out;
    }

    for (std::size_t s = 0; s < k; ++s)
        if (th[2 * s] * th[2 * s + 1] < 0.0) out.non_monotone = true;

    Sizes q(k);
    auto amount_at = [&](const std::vector<double>& w, double s, Sizes& dst) {
        for (std::size_t i = 0; i < k; ++i) dst[i] = std::min(s * w[i] / costs[i], q_max[i]);
    };
    // Cost of the cheapest target-reaching point along direction w (inf if none).
    auto ray_cost = [&](const std::vector<double>& w, Sizes* best) {
        double s_max = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            if (w[i] > 0.0) s_max = std::max(s_max, costs[i] * q_max[i] / w[i]);
        auto h = [&](double s) {
            amount_at(w, s, q);
            return detail::raw_eval(family, th, q);
        };
        const auto found = detail::smallest_reaching(h, 0.0, s_max, target, 1e-12);
        if (!found.root) return std::numeric_limits<double>::infinity();
        Sizes at(k);
        amount_at(w, *found.root, at);
        if (best) *best = at;
        return dot(costs, at);
    };

    std::size_t divisions = 2;
    while (divisions < 128 && detail::binomial(divisions + 1 + k - 1, k - 1) <= 1024) ++divisions;
    std::vector<std::vector<double>> grid;
    std::vector<std::size_t> scratch;
    detail::simplex_points(k, divisions, scratch, divisions, grid);

    std::vector<double> costs_on_grid(grid.size());
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        costs_on_grid[g] = ray_cost(grid[g], nullptr);
        best_cost = std::min(best_cost, costs_on_grid[g]);
    }
    if (!std::isfinite(best_cost)) return out;

    std::vector<std::size_t> ties;
    for (std::size_t g = 0; g < grid.size(); ++g)
        if (costs_on_grid[g] <= best_cost + 1e-9 * std::abs(best_cost)) ties.push_back(g);
    std::size_t pick = ties.front();
    if (ties.size() > 1) {
        auto gen = substream(tie_seed, "tie-break");
        std::uniform_int_distribution<std::size_t> choose(0, ties.size() - 1);
        pick = ties[choose(gen)];
    }

    std::vector<double> w = grid[pick];
    double cost = costs_on_grid[pick];
    double step = 1.0 / static_cast<double>(divisions);
    for (int guard = 0; step > 1e-10 && guard < 100000; ++guard) {
        bool improved = false;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                if (i == j || w[i] < step) continue;
                std::vector<double> trial = w;
                trial[i] -= step;
                trial[j] += step;
                const double c = ray_cost(trial, nullptr);
                if (c < cost) {
                    w = std::move(trial);
                    cost = c;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    Sizes best(k);
    ray_cost(w, &best);
    out.amount = best;
    return out;
}

}  // namespace loc::curves
