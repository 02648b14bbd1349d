// density.hpp
//
// Probability model of the minimum data requirement: bootstrap resampling
// of the regression set, per-resample fit-and-invert, and density estimation
// (Gaussian KDE for one source, diagonal Gaussian mixtures for several).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "loc/core.hpp"
#include "loc/curves.hpp"

namespace loc::density {

namespace detail {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Gaussian kernel density (one source)

/// Weighted Gaussian-kernel density with a common bandwidth. Kernels farther
/// than 9 bandwidths from the query contribute 0 (pdf) or their full weight
/// (cdf); the neglected tail mass is below 1e-18 per kernel.
class KernelDensity {
public:
    static constexpr double kWindow = 9.0;

    KernelDensity(std::vector<double> centers, std::vector<double> weights, double bandwidth)
        : bandwidth_(bandwidth) {
        require(!centers.empty(), "kernel density needs at least one point");
        require(centers.size() == weights.size(), "kernel density: centers/weights size mismatch");
        require(bandwidth > 0.0 && std::isfinite(bandwidth), "kernel density: bandwidth must be positive");
        std::vector<std::size_t> order(centers.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return centers[a] < centers[b]; });
        double sum = 0.0;
        for (double w : weights) {
            require(w >= 0.0 && std::isfinite(w), "kernel density: weights must be non-negative");
            sum += w;
        }
        require(sum > 0.0, "kernel density: weights must not all be zero");
        centers_.reserve(order.size());
        weights_.reserve(order.size());
        for (auto i : order) {
            centers_.push_back(centers[i]);
            weights_.push_back(weights[i] / sum);
        }
        cumulative_.resize(weights_.size() + 1, 0.0);
        for (std::size_t i = 0; i < weights_.size(); ++i) cumulative_[i + 1] = cumulative_[i] + weights_[i];
    }

    /// Equal-weight kernels at `points`.
    static KernelDensity from_points(std::vector<double> points, double bandwidth) {
        std::vector<double> w(points.size(), 1.0);
        return {std::move(points), std::move(w), bandwidth};
    }

    double pdf(double q) const {
        const auto [first, last] = window(q);
        double s = 0.0;
        for (std::size_t i = first; i < last; ++i)
            s += weights_[i] * detail::normal_pdf((q - centers_[i]) / bandwidth_);
        return s / bandwidth_;
    }

    double cdf(double q) const {
        const auto [first, last] = window(q);
        double s = cumulative_[first];
        for (std::size_t i = first; i < last; ++i)
            s += weights_[i] * detail::normal_cdf((q - centers_[i]) / bandwidth_);
        return std::clamp(s, 0.0, 1.0);
    }

    double bandwidth() const { return bandwidth_; }
    const std::vector<double>& centers() const { return centers_; }
    const std::vector<double>& weights() const { return weights_; }
    double lowest_center() const { return centers_.front(); }
    double highest_center() const { return centers_.back(); }

private:
    std::pair<std::size_t, std::size_t> window(double q) const {
        const double reach = kWindow * bandwidth_;
        const auto lo = std::lower_bound(centers_.begin(), centers_.end(), q - reach);
        const auto hi = std::upper_bound(lo, centers_.end(), q + reach);
        return {static_cast<std::size_t>(lo - centers_.begin()), static_cast<std::size_t>(hi - centers_.begin())};
    }

    std::vector<double> centers_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
    double bandwidth_;
};

// ---------------------------------------------------------------------------
// Diagonal Gaussian mixture (any number of sources)

struct GaussianComponent {
    double weight = 1.0;
    Sizes mean;
    Sizes variance;
};

class GaussianMixture {
public:
    explicit GaussianMixture(std::vector<GaussianComponent> components) : components_(std::move(components)) {
        require(!components_.empty(), "mixture needs at least one component");
        dimension_ = components_.front().mean.size();
        require(dimension_ >= 1, "mixture components need a dimension");
        double sum = 0.0;
        for (const auto& c : components_) {
            require(c.mean.size() == dimension_ && c.variance.size() == dimension_,
                    "mixture components must share the dimension");
            require(c.weight > 0.0, "mixture weights must be positive");
            for (double v : c.variance) require(v > 0.0 && std::isfinite(v), "mixture variances must be positive");
            sum += c.weight;
        }
        require(std::abs(sum - 1.0) <= 1e-9, "mixture weights must sum to 1");
    }

    std::size_t dimension() const { return dimension_; }
    const std::vector<GaussianComponent>& components() const { return components_; }

    double pdf(const Sizes& q) const {
        double s = 0.0;
        for (const auto& c : components_) {
            double p = c.weight;
            for (std::size_t d = 0; d < dimension_; ++d) {
                const double sd = std::sqrt(c.variance[d]);
                p *= detail::normal_pdf((q[d] - c.mean[d]) / sd) / sd;
            }
            s += p;
        }
        return s;
    }

    double cdf(const Sizes& q) const {
        double s = 0.0;
        for (const auto& c : components_) {
            double p = c.weight;
            for (std::size_t d = 0; d < dimension_; ++d)
                p *= detail::normal_cdf((q[d] - c.mean[d]) / std::sqrt(c.variance[d]));
            s += p;
        }
        return std::clamp(s, 0.0, 1.0);
    }

    /// Partial derivatives of the cdf; the per-component cdf factorizes.
    Sizes cdf_gradient(const Sizes& q) const {
        Sizes g(dimension_, 0.0);
        std::vector<double> phi(dimension_), dens(dimension_);
        for (const auto& c : components_) {
            for (std::size_t d = 0; d < dimension_; ++d) {
                const double sd = std::sqrt(c.variance[d]);
                const double z = (q[d] - c.mean[d]) / sd;
                phi[d] = detail::normal_cdf(z);
                dens[d] = detail::normal_pdf(z) / sd;
            }
            for (std::size_t d = 0; d < dimension_; ++d) {
                double p = c.weight * dens[d];
                for (std::size_t j = 0; j < dimension_; ++j)
                    if (j != d) p *= phi[j];
                g[d] += p;
            }
        }
        return g;
    }

private:
    std::vector<GaussianComponent> components_;
    std::size_t dimension_ = 0;
};

// ---------------------------------------------------------------------------
// RequirementDistribution

/// Density and cdf of the data requirement. Immutable once fitted.
class RequirementDistribution {
public:
    RequirementDistribution(KernelDensity kde, bool degenerate = false)
        : backend_(std::move(kde)), degenerate_(degenerate) {}
    RequirementDistribution(GaussianMixture gmm, bool degenerate = false)
        : backend_(std::move(gmm)), degenerate_(degenerate) {}

    std::size_t dimension() const {
        if (const auto* g = std::get_if<GaussianMixture>(&backend_)) return g->dimension();
        return 1;
    }
    bool degenerate() const { return degenerate_; }
    bool is_kde() const { return std::holds_alternative<KernelDensity>(backend_); }
    const KernelDensity* kde() const { return std::get_if<KernelDensity>(&backend_); }
    const GaussianMixture* gmm() const { return std::get_if<GaussianMixture>(&backend_); }

    double pdf(const Sizes& q) const {
        check_dim(q);
        if (const auto* k = kde()) return k->pdf(q[0]);
        return gmm()->pdf(q);
    }
    double cdf(const Sizes& q) const {
        check_dim(q);
        if (const auto* k = kde()) return k->cdf(q[0]);
        return gmm()->cdf(q);
    }
    Sizes cdf_gradient(const Sizes& q) const {
        check_dim(q);
        if (const auto* k = kde()) return {k->pdf(q[0])};
        return gmm()->cdf_gradient(q);
    }

    double pdf(double q) const { return pdf(Sizes{q}); }
    double cdf(double q) const { return cdf(Sizes{q}); }

    /// Bracket [lo, hi] holding all but a negligible tail of the mass (K = 1).
    std::pair<double, double> support_bracket() const {
        require(dimension() == 1, "support_bracket: one-source distributions only");
        if (const auto* k = kde()) {
            const double reach = 40.0 * k->bandwidth();
            return {k->lowest_center() - reach, k->highest_center() + reach};
        }
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& c : gmm()->components()) {
            const double sd = std::sqrt(c.variance[0]);
            lo = std::min(lo, c.mean[0] - 40.0 * sd);
            hi = std::max(hi, c.mean[0] + 40.0 * sd);
        }
        return {lo, hi};
    }

    /// Mean of the distribution per source.
    Sizes mean() const {
        if (const auto* k = kde()) {
            double m = 0.0;
            for (std::size_t i = 0; i < k->centers().size(); ++i) m += k->weights()[i] * k->centers()[i];
            return {m};
        }
        Sizes m(dimension(), 0.0);
        for (const auto& c : gmm()->components())
            for (std::size_t d = 0; d < m.size(); ++d) m[d] += c.weight * c.mean[d];
        return m;
    }

private:
    void check_dim(const Sizes& q) const {
        require(q.size() == dimension(), "distribution evaluated with the wrong dimension");
    }

    std::variant<KernelDensity, GaussianMixture> backend_;
    bool degenerate_ = false;
};

inline double pdf(const RequirementDistribution& dist, const Sizes& q) { return dist.pdf(q); }
inline double cdf(const RequirementDistribution& dist, const Sizes& q) { return dist.cdf(q); }

/// Smallest q with cdf(q) >= p, by bisection (one source only).
inline double quantile(const RequirementDistribution& dist, double p) {
    require(dist.dimension() == 1, "quantile: one-source distributions only");
    require(p > 0.0 && p < 1.0, "quantile: p must lie in (0, 1)");
    auto [lo, hi] = dist.support_bracket();
    const double tol = 1e-9 * std::max(1.0, hi - lo) * 1e-3;
    while (dist.cdf(lo) >= p) lo -= (hi - lo);
    while (dist.cdf(hi) < p) hi += (hi - lo);
    for (int i = 0; i < 200 && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (dist.cdf(mid) >= p) hi = mid;
        else lo = mid;
    }
    return hi;
}

// ---------------------------------------------------------------------------
// Fitting

struct KdeFit {
    RequirementDistribution distribution;
    double bandwidth = 0.0;
    double log_likelihood = 0.0;  // leave-one-out, at the chosen bandwidth
    bool degenerate = false;
    bool binned = false;
};

namespace detail {

inline constexpr std::size_t kBinThreshold = 5000;
inline constexpr std::size_t kBins = 16384;

inline bool all_identical(const std::vector<double>& xs) {
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    return *mx - *mn <= 1e-12 * std::max(1.0, std::abs(*mx));
}

// Leave-one-out log-likelihood of a Gaussian KDE on sorted points.
inline double loo_log_likelihood(const std::vector<double>& sorted, double h) {
    const std::size_t n = sorted.size();
    const double reach = KernelDensity::kWindow * h;
    double ll = 0.0;
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (sorted[lo] < sorted[i] - reach) ++lo;
        while (hi < n && sorted[hi] <= sorted[i] + reach) ++hi;
        double s = 0.0;
        for (std::size_t j = lo; j < hi; ++j)
            if (j != i) s += normal_pdf((sorted[i] - sorted[j]) / h);
        ll += std::log(std::max(s / (static_cast<double>(n - 1) * h), 1e-300));
    }
    return ll;
}

// Binned version: nodes with (fractional) counts, self-contribution removed.
inline double loo_log_likelihood_binned(const std::vector<double>& nodes, const std::vector<double>& counts,
                                        std::size_t n, double h) {
    const std::size_t m = nodes.size();
    const double reach = KernelDensity::kWindow * h;
    double ll = 0.0;
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < m; ++i) {
        while (nodes[lo] < nodes[i] - reach) ++lo;
        while (hi < m && nodes[hi] <= nodes[i] + reach) ++hi;
        double s = 0.0;
        for (std::size_t j = lo; j < hi; ++j) s += counts[j] * normal_pdf((nodes[i] - nodes[j]) / h);
        s -= normal_pdf(0.0);
        ll += counts[i] * std::log(std::max(s / (static_cast<double>(n - 1) * h), 1e-300));
    }
    return ll;
}

// Linear binning onto an equally spaced grid; drops empty nodes.
inline void linear_bin(const std::vector<double>& xs, std::vector<double>& nodes, std::vector<double>& counts) {
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *mn, delta = (*mx - *mn) / static_cast<double>(kBins - 1);
    std::vector<double> grid(kBins, 0.0);
    for (double x : xs) {
        const double pos = (x - lo) / delta;
        auto idx = static_cast<std::size_t>(std::floor(pos));
        if (idx >= kBins - 1) idx = kBins - 2;
        const double frac = pos - static_cast<double>(idx);
        grid[idx] += 1.0 - frac;
        grid[idx + 1] += frac;
    }
    nodes.clear();
    counts.clear();
    for (std::size_t i = 0; i < kBins; ++i) {
        if (grid[i] <= 0.0) continue;
        nodes.push_back(lo + delta * static_cast<double>(i));
        counts.push_back(grid[i]);
    }
}

}  // namespace detail

/// Gaussian KDE whose bandwidth maximizes the leave-one-out log-likelihood
/// over `bandwidth_grid` (ties go to the smaller bandwidth). Samples larger
/// than 5000 points are linearly binned onto 16384 nodes first. All-equal
/// estimates give a degenerate fit at the smallest grid bandwidth.
inline KdeFit fit_kde(const std::vector<double>& estimates, std::vector<double> bandwidth_grid) {
    require(estimates.size() >= 2, "fit_kde needs at least two estimates");
    require(!bandwidth_grid.empty(), "fit_kde needs a non-empty bandwidth grid");
    for (double h : bandwidth_grid) require(h > 0.0 && std::isfinite(h), "bandwidths must be positive");
    for (double x : estimates) require(std::isfinite(x), "estimates must be finite");
    std::sort(bandwidth_grid.begin(), bandwidth_grid.end());

    if (detail::all_identical(estimates)) {
        const double h = bandwidth_grid.front();
        return {RequirementDistribution(KernelDensity::from_points(estimates, h), true), h, 0.0, true, false};
    }

    std::vector<double> sorted = estimates;
    std::sort(sorted.begin(), sorted.end());
    const bool binned = sorted.size() > detail::kBinThreshold;
    std::vector<double> nodes, counts;
    if (binned) detail::linear_bin(sorted, nodes, counts);

    double best_h = bandwidth_grid.front();
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double h : bandwidth_grid) {
        const double ll = binned ? detail::loo_log_likelihood_binned(nodes, counts, sorted.size(), h)
                                 : detail::loo_log_likelihood(sorted, h);
        if (ll > best_ll) {
            best_ll = ll;
            best_h = h;
        }
    }
    if (binned)
        return {RequirementDistribution(KernelDensity(nodes, counts, best_h)), best_h, best_ll, false, true};
    return {RequirementDistribution(KernelDensity::from_points(std::move(sorted), best_h)), best_h, best_ll, false,
            false};
}

struct GmmFit {
    RequirementDistribution distribution;
    std::size_t components = 0;
    double bic = 0.0;
    double log_likelihood = 0.0;
    bool degenerate = false;
};

namespace detail {

struct EmResult {
    std::vector<GaussianComponent> components;
    double log_likelihood = -std::numeric_limits<double>::infinity();
};

inline double log_component_density(const GaussianComponent& c, const Sizes& x) {
    double lp = std::log(c.weight);
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = x[d] - c.mean[d];
        lp -= 0.5 * (std::log(2.0 * std::numbers::pi * c.variance[d]) + diff * diff / c.variance[d]);
    }
    return lp;
}

inline EmResult run_em(const std::vector<Sizes>& xs, std::size_t k, const Sizes& floor, std::uint64_t seed) {
    const std::size_t n = xs.size(), dim = xs.front().size();
    auto sq_dist = [&](const Sizes& a, const Sizes& b) {
        double s = 0.0;
        for (std::size_t d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]) / std::max(floor[d], 1e-300);
        return s;
    };

    // k-means++ seeding.
    auto gen = substream(seed, "gmm-init", k);
    std::vector<Sizes> centers;
    centers.push_back(xs[std::uniform_int_distribution<std::size_t>(0, n - 1)(gen)]);
    std::vector<double> d2(n);
    while (centers.size() < k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, sq_dist(xs[i], c));
            d2[i] = best;
            sum += best;
        }
        std::size_t pick = 0;
        if (sum > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, sum)(gen);
            for (pick = 0; pick + 1 < n; ++pick) {
                if (u < d2[pick]) break;
                u -= d2[pick];
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(gen);
        }
        centers.push_back(xs[pick]);
    }

    // Hard assignment to initialize weights, means and variances.
    std::vector<std::vector<double>> resp(n, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double dd = sq_dist(xs[i], centers[c]);
            if (dd < bd) {
                bd = dd;
                best = c;
            }
        }
        resp[i][best] = 1.0;
    }

    Sizes global_var(dim, 0.0), global_mean(dim, 0.0);
    for (const auto& x : xs)
        for (std::size_t d = 0; d < dim; ++d) global_mean[d] += x[d] / static_cast<double>(n);
    for (const auto& x : xs)
        for (std::size_t d = 0; d < dim; ++d)
            global_var[d] += (x[d] - global_mean[d]) * (x[d] - global_mean[d]) / static_cast<double>(n);

    std::vector<GaussianComponent> comps(k, GaussianComponent{1.0 / static_cast<double>(k), Sizes(dim), Sizes(dim)});
    auto m_step = [&] {
        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::size_t i = 0; i < n; ++i) nk += resp[i][c];
            auto& comp = comps[c];
            comp.weight = std::max(nk / static_cast<double>(n), 1e-12);
            for (std::size_t d = 0; d < dim; ++d) {
                if (nk <= 1e-12) {
                    comp.mean[d] = centers[c][d];
                    comp.variance[d] = std::max(global_var[d], floor[d]);
                    continue;
                }
                double m = 0.0;
                for (std::size_t i = 0; i < n; ++i) m += resp[i][c] * xs[i][d];
                m /= nk;
                double v = 0.0;
                for (std::size_t i = 0; i < n; ++i) v += resp[i][c] * (xs[i][d] - m) * (xs[i][d] - m);
                comp.mean[d] = m;
                comp.variance[d] = std::max(v / nk, floor[d]);
            }
        }
        double wsum = 0.0;
        for (const auto& c : comps) wsum += c.weight;
        for (auto& c : comps) c.weight /= wsum;
    };
    auto e_step = [&] {
        double ll = 0.0;
        std::vector<double> lp(k);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                lp[c] = log_component_density(comps[c], xs[i]);
                mx = std::max(mx, lp[c]);
            }
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += std::exp(lp[c] - mx);
            const double lse = mx + std::log(s);
            ll += lse;
            for (std::size_t c = 0; c < k; ++c) resp[i][c] = std::exp(lp[c] - lse);
        }
        return ll;
    };

    m_step();
    double ll = e_step();
    for (int iter = 0; iter < 100; ++iter) {
        m_step();
        const double next = e_step();
        const bool done = std::abs(next - ll) / static_cast<double>(n) < 1e-8;
        ll = next;
        if (done) break;
    }
    return {comps, ll};
}

}  // namespace detail

/// Diagonal-covariance Gaussian mixture fitted by EM (k-means++ seeding from
/// `seed`, at most 100 iterations or 1e-8 per-sample log-likelihood change).
/// The component count is chosen from `component_grid` by BIC, ties to the
/// smaller count. All-equal estimates give a degenerate single component.
inline GmmFit fit_gmm(const std::vector<Sizes>& estimates, std::vector<std::size_t> component_grid,
                      std::uint64_t seed) {
    require(!component_grid.empty(), "fit_gmm needs a non-empty component grid");
    std::sort(component_grid.begin(), component_grid.end());
    require(component_grid.front() >= 1 && component_grid.back() <= 10, "component counts must lie in [1, 10]");
    require(estimates.size() >= component_grid.back(), "fit_gmm needs at least max(component_grid) estimates");
    const std::size_t dim = estimates.front().size();
    require(dim >= 1, "fit_gmm: estimates need a dimension");
    for (const auto& e : estimates) {
        require(e.size() == dim, "fit_gmm: estimates must share the dimension");
        for (double x : e) require(std::isfinite(x), "fit_gmm: estimates must be finite");
    }
    const std::size_t n = estimates.size();

    Sizes mean(dim, 0.0), var(dim, 0.0);
    for (const auto& e : estimates)
        for (std::size_t d = 0; d < dim; ++d) mean[d] += e[d] / static_cast<double>(n);
    for (const auto& e : estimates)
        for (std::size_t d = 0; d < dim; ++d) var[d] += (e[d] - mean[d]) * (e[d] - mean[d]) / static_cast<double>(n);

    bool identical = true;
    for (const auto& e : estimates)
        for (std::size_t d = 0; d < dim; ++d)
            if (std::abs(e[d] - estimates.front()[d]) > 1e-12 * std::max(1.0, std::abs(e[d]))) identical = false;

    Sizes floor(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        const double scale = 1e-6 * std::max(1.0, std::abs(mean[d]));
        floor[d] = std::max(1e-6 * var[d], scale * scale);
    }

    if (identical) {
        GaussianComponent c{1.0, estimates.front(), floor};
        GaussianMixture gmm({c});
        return {RequirementDistribution(std::move(gmm), true), 1, 0.0, 0.0, true};
    }

    std::optional<GmmFit> best;
    for (std::size_t k : component_grid) {
        auto em = detail::run_em(estimates, k, floor, seed);
        const double params = static_cast<double>(k - 1 + 2 * k * dim);
        const double bic = -2.0 * em.log_likelihood + params * std::log(static_cast<double>(n));
        if (!best || bic < best->bic)
            best = GmmFit{RequirementDistribution(GaussianMixture(std::move(em.components))), k, bic,
                          em.log_likelihood, false};
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Bootstrap

enum class CensorPolicy { Drop, CapAtBound };

struct BootstrapConfig {
    explicit BootstrapConfig(curves::CurveFamily fam, std::size_t b = 500, std::uint64_t s = 0)
        : family(fam), resamples(b), seed(s) {
        validate();
    }

    curves::CurveFamily family;
    std::size_t resamples;
    std::uint64_t seed;
    Sizes q_cap;                 // empty: cap_factor x the largest observed size per source
    double cap_factor = 100.0;
    CensorPolicy censor = CensorPolicy::CapAtBound;
    curves::FitConfig fit;
    std::optional<std::vector<double>> init;
    /// Treat fits that hit the iteration limit as censored. Off by default:
    /// families fitted to curves outside the family (a power law on a
    /// logarithmic curve) drift forever and the best-so-far fit is still a
    /// usable estimate.
    bool censor_non_converged = false;
    std::size_t workers = 1;

    void validate() const {
        require(resamples >= 2, "bootstrap needs at least 2 resamples");
        require(cap_factor > 0.0, "cap_factor must be positive");
        for (double q : q_cap) require(q > 0.0, "q_cap must be positive");
        require(workers >= 1, "workers must be >= 1");
    }
};

struct BootstrapResult {
    std::vector<Sizes> estimates;   // survivors in resample order
    std::size_t unreachable = 0;
    std::size_t non_converged = 0;
    std::size_t censored = 0;       // capped or dropped
};

/// Draws `cfg.resamples` bootstrap resamples of `data` (with replacement,
/// resample b uses substream "bootstrap"/b of the seed), refits the family
/// with doubling weights re-derived from the resampled order, and inverts at
/// `target`. Output is independent of the worker count.
inline BootstrapResult bootstrap_requirements(const curves::RegressionSet& data, double target, const Sizes& costs,
                                              const BootstrapConfig& cfg) {
    cfg.validate();
    require(std::isfinite(target), "bootstrap target must be finite");
    const std::size_t k = data.source_count();
    require(costs.size() == k, "bootstrap: costs dimension mismatch");
    Sizes cap = cfg.q_cap;
    if (cap.empty()) {
        cap = data.max_sizes();
        for (auto& c : cap) c = std::max(c, 1.0) * cfg.cap_factor;
    }
    require(cap.size() == k, "bootstrap: q_cap dimension mismatch");

    struct Slot {
        std::optional<Sizes> estimate;
        bool unreachable = false;
        bool non_converged = false;
    };
    std::vector<Slot> slots(cfg.resamples);
    const auto& samples = data.samples();
    const auto init = cfg.init ? *cfg.init : cfg.family.default_init();

    parallel_for(cfg.resamples, cfg.workers, [&](std::size_t b) {
        auto gen = substream(cfg.seed, "bootstrap", b);
        std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
        std::vector<curves::CurveSample> drawn;
        drawn.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) drawn.push_back(samples[pick(gen)]);
        bool positive = false;
        for (const auto& s : drawn) positive = positive || total(s.sizes) > 0.0;
        Slot& slot = slots[b];
        if (!positive) {
            slot.non_converged = true;
            return;
        }
        const auto set = curves::RegressionSet::with_doubling_weights(std::move(drawn));
        curves::FitResult fit;
        try {
            fit = curves::fit_curve(cfg.family, set, init, cfg.fit);
        } catch (const DomainError&) {
            slot.non_converged = true;
            return;
        }
        if (!fit.converged) {
            slot.non_converged = true;
            if (cfg.censor_non_converged) return;
        }
        const auto inv = curves::invert_curve(fit.model, target, costs, cap, derive_seed(cfg.seed, "tie-break", b));
        if (!inv.reachable()) {
            slot.unreachable = true;
            slot.estimate.reset();
            return;
        }
        slot.estimate = *inv.amount;
    });

    BootstrapResult out;
    for (auto& slot : slots) {
        if (slot.non_converged) ++out.non_converged;
        if (slot.estimate) {
            out.estimates.push_back(std::move(*slot.estimate));
            continue;
        }
        if (slot.unreachable) ++out.unreachable;
        ++out.censored;
        if (cfg.censor == CensorPolicy::CapAtBound) out.estimates.push_back(cap);
    }
    if (out.estimates.empty()) throw AllCensored("every bootstrap resample was censored; widen q_cap or change family");
    return out;
}

}  // namespace loc::density
