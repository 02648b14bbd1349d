#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "loc/curves.hpp"

using namespace loc;
using namespace loc::curves;

namespace {

RegressionSet sampled(const CurveFamily& fam, const std::vector<double>& theta, const std::vector<double>& sizes) {
    std::vector<CurveSample> s;
    for (double q : sizes) s.push_back({{q}, eval_curve(fam, theta, {q})});
    return RegressionSet::with_doubling_weights(s);
}

std::vector<double> range(double lo, double hi, double step) {
    std::vector<double> out;
    for (double q = lo; q <= hi + 1e-9; q += step) out.push_back(q);
    return out;
}

}  // namespace

TEST(Families, ParameterCounts) {
    EXPECT_EQ(CurveFamily::power_law().parameter_count(), 3u);
    EXPECT_EQ(CurveFamily::logarithmic().parameter_count(), 3u);
    EXPECT_EQ(CurveFamily::arctan().parameter_count(), 3u);
    EXPECT_EQ(CurveFamily::algebraic_root().parameter_count(), 3u);
    EXPECT_EQ(CurveFamily::additive_power_law(2).parameter_count(), 5u);
    EXPECT_EQ(CurveFamily::additive_power_law(4).parameter_count(), 9u);
    EXPECT_EQ(CurveFamily::from_name("log"), CurveFamily::logarithmic());
    EXPECT_EQ(CurveFamily::from_name("additive", 2), CurveFamily::additive_power_law(2));
    EXPECT_THROW(CurveFamily::from_name("spline"), PreconditionError);
}

TEST(Families, DefaultInitIsOnesAndZeroBias) {
    EXPECT_EQ(CurveFamily::power_law().default_init(), (std::vector<double>{1, 1, 0}));
    EXPECT_EQ(CurveFamily::additive_power_law(2).default_init(), (std::vector<double>{1, 1, 1, 1, 0}));
}

TEST(EvalCurve, PowerLawSquareRoot) {
    EXPECT_DOUBLE_EQ(eval_curve(CurveFamily::power_law(), std::vector<double>{10, 0.5, 0}, {100.0}), 100.0);
}

TEST(EvalCurve, ZeroCoefficientLeavesBias) {
    for (double p : {-3.0, 0.0, 0.7, 5.0})
        EXPECT_DOUBLE_EQ(eval_curve(CurveFamily::power_law(), std::vector<double>{0, p, 42.0}, {7.0}), 42.0);
}

TEST(EvalCurve, AdditiveTwoSources) {
    const std::vector<double> theta{1, 0.5, 1, 0.5, 0};
    EXPECT_DOUBLE_EQ(eval_curve(CurveFamily::additive_power_law(2), theta, {4.0, 9.0}), std::sqrt(4.0) + std::sqrt(9.0));
}

TEST(EvalCurve, OtherFamiliesMatchFormulas) {
    const double q = 37.0;
    EXPECT_NEAR(eval_curve(CurveFamily::logarithmic(), std::vector<double>{8, 1, 2}, {q}), 8 * std::log(q + 1) + 2, 1e-12);
    EXPECT_NEAR(eval_curve(CurveFamily::arctan(), std::vector<double>{0.01, 0.2, 3}, {q}),
                200.0 / std::numbers::pi * std::atan(0.01 * std::numbers::pi / 2 * q + 0.2) + 3, 1e-12);
    EXPECT_NEAR(eval_curve(CurveFamily::algebraic_root(), std::vector<double>{0.02, 1.5, 1}, {q}),
                100 * q / std::pow(1 + std::pow(0.02 * q, 1.5), 1 / 1.5) + 1, 1e-12);
}

TEST(EvalCurve, DomainErrors) {
    EXPECT_THROW(eval_curve(CurveFamily::logarithmic(), std::vector<double>{1, -5, 0}, {3.0}), DomainError);
    EXPECT_THROW(eval_curve(CurveFamily::power_law(), std::vector<double>{1, -0.5, 0}, {0.0}), DomainError);
    EXPECT_THROW(eval_curve(CurveFamily::power_law(), std::vector<double>{1, 0.5, 0}, {-1.0}), PreconditionError);
    EXPECT_THROW(eval_curve(CurveFamily::power_law(), std::vector<double>{1, 0.5}, {1.0}), PreconditionError);
}

TEST(RegressionSetType, Invariants) {
    EXPECT_THROW(RegressionSet({}), PreconditionError);
    EXPECT_THROW(RegressionSet({{{0.0}, 1.0}}), PreconditionError);
    EXPECT_THROW(RegressionSet({{{1.0}, 1.0}, {{1.0, 2.0}, 1.0}}), PreconditionError);
    EXPECT_THROW(RegressionSet({{{1.0}, 1.0, 0.0}}), PreconditionError);
    EXPECT_THROW(RegressionSet({{{1.0}, NAN}}), PreconditionError);
}

TEST(Weights, ConsecutiveRatioIsExactlyTwo) {
    for (std::size_t n : {1u, 2u, 10u, 70u, 200u}) {
        const auto w = doubling_weights(n);
        double sum = 0.0;
        for (double x : w) sum += x;
        EXPECT_NEAR(sum, 1.0, 1e-12);
        for (std::size_t i = 0; i + 1 < n && i < 60; ++i) EXPECT_EQ(w[n - 1 - i] / w[n - 2 - i], 2.0) << n << " " << i;
    }
}

TEST(Weights, OrderedByTotalSize) {
    auto set = RegressionSet::with_doubling_weights({{{30.0}, 3}, {{10.0}, 1}, {{20.0}, 2}});
    ASSERT_EQ(set.size(), 3u);
    EXPECT_EQ(set.samples()[0].sizes[0], 10.0);
    EXPECT_EQ(set.samples()[2].sizes[0], 30.0);
    EXPECT_EQ(set.samples()[1].weight / set.samples()[0].weight, 2.0);
    EXPECT_EQ(set.samples()[2].weight / set.samples()[1].weight, 2.0);
}

TEST(FitCurve, RecoversNoiselessPowerLaw) {
    const std::vector<double> truth{50, 0.3, 5};
    const auto data = sampled(CurveFamily::power_law(), truth, range(100, 1000, 100));
    const auto fit = fit_curve(CurveFamily::power_law(), data);
    EXPECT_TRUE(fit.converged);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(fit.model.theta[i], truth[i], 1e-4) << i;
}

TEST(FitCurve, SingleRepeatedSampleIsInterpolated) {
    RegressionSet data = RegressionSet::with_doubling_weights({{{10.0}, 20.0}, {{10.0}, 20.0}, {{10.0}, 20.0}});
    const auto fit = fit_curve(CurveFamily::power_law(), data);
    EXPECT_LE(std::abs(eval_curve(fit.model, {10.0}) - 20.0), 1e-9);
}

TEST(FitCurve, LogarithmicScoresMatch) {
    const std::vector<double> truth{8, 1, 2};
    const auto sizes = range(10, 100, 10);
    const auto data = sampled(CurveFamily::logarithmic(), truth, sizes);
    const auto fit = fit_curve(CurveFamily::logarithmic(), data);
    for (double q : sizes)
        EXPECT_NEAR(eval_curve(fit.model, {q}), eval_curve(CurveFamily::logarithmic(), truth, {q}), 1e-3) << q;
}

TEST(FitCurve, GradientMatchesFiniteDifferencesOfLoss) {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<CurveSample> s;
    for (double q : range(100, 1500, 100)) s.push_back({{q}, 50 * std::pow(q, 0.3) + 5 + noise(gen)});
    const auto data = RegressionSet::with_doubling_weights(s);
    const auto fam = CurveFamily::power_law();
    std::uniform_real_distribution<double> u(0.2, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> theta{40 * u(gen), 0.25 * u(gen), 5 * u(gen)};
        const auto g = fit_loss_gradient(fam, theta, data);
        for (int j = 0; j < 3; ++j) {
            auto hi = theta, lo = theta;
            const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
            hi[j] += h;
            lo[j] -= h;
            const double fd = (fit_loss(fam, hi, data) - fit_loss(fam, lo, data)) / (2 * h);
            EXPECT_NEAR(g[j], fd, 1e-4 * std::max(1.0, std::abs(fd))) << trial << " " << j;
        }
    }
    // First-order optimality at the returned parameters.
    const auto fit = fit_curve(fam, data);
    ASSERT_TRUE(fit.converged);
    const auto g = fit_loss_gradient(fam, fit.model.theta, data);
    for (int j = 0; j < 3; ++j) {
        auto hi = fit.model.theta, lo = fit.model.theta;
        const double h = 1e-7 * std::max(1.0, std::abs(hi[j]));
        hi[j] += h;
        lo[j] -= h;
        const double fd = (fit_loss(fam, hi, data) - fit_loss(fam, lo, data)) / (2 * h);
        EXPECT_LE(std::abs(g[j]), 1e-6 * (1 + fit.loss)) << j;
        EXPECT_LE(std::abs(fd), 1e-4 * (1 + fit.loss)) << j;
    }
}

TEST(FitCurve, DeterministicBitwise) {
    std::vector<CurveSample> s;
    for (double q : range(50, 800, 50)) s.push_back({{q}, 30 * std::log(q) + std::sin(q)});
    const auto data = RegressionSet::with_doubling_weights(s);
    const auto a = fit_curve(CurveFamily::power_law(), data);
    const auto b = fit_curve(CurveFamily::power_law(), data);
    EXPECT_EQ(a.model.theta, b.model.theta);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(FitCurve, NonConvergenceIsReportedNotThrown) {
    std::vector<CurveSample> s;
    for (double q : range(500, 5000, 500)) s.push_back({{q}, 10 * std::log(q)});
    const auto data = RegressionSet::with_doubling_weights(s);
    FitConfig cfg;
    cfg.max_iterations = 3;
    const auto fit = fit_curve(CurveFamily::power_law(), data, cfg);
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.iterations, 3);
    EXPECT_TRUE(std::isfinite(fit.loss));
}

TEST(FitCurve, InitLengthChecked) {
    const auto data = sampled(CurveFamily::power_law(), {1, 0.5, 0}, {1, 4, 9});
    EXPECT_THROW(fit_curve(CurveFamily::power_law(), data, std::vector<double>{1.0, 1.0}), PreconditionError);
}

TEST(InvertCurve, PowerLawClosedForm) {
    const RegressionModel m{CurveFamily::power_law(), {1, 0.5, 0}};
    const auto inv = invert_curve(m, 10.0, {1.0}, {1e9});
    ASSERT_TRUE(inv.reachable());
    EXPECT_NEAR((*inv.amount)[0], 100.0, 1e-9 * 100.0);
    EXPECT_GE(eval_curve(m, *inv.amount), 10.0);
}

TEST(InvertCurve, MatchesClosedFormAcrossModels) {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> a(0.5, 80), b(0.05, 0.9), c(-20, 20), t(1, 60);
    for (int i = 0; i < 200; ++i) {
        const RegressionModel m{CurveFamily::power_law(), {a(gen), b(gen), c(gen)}};
        const double target = m.theta[2] + t(gen);
        const double expect = std::pow((target - m.theta[2]) / m.theta[0], 1.0 / m.theta[1]);
        const auto inv = invert_curve(m, target, {1.0}, {std::max(1e12, 2 * expect)});
        ASSERT_TRUE(inv.reachable());
        EXPECT_NEAR((*inv.amount)[0], expect, 1e-9 * expect) << i;
    }
}

TEST(InvertCurve, BoundedFamilyUnreachable) {
    const RegressionModel m{CurveFamily::arctan(), {0.01, 0.0, 0.0}};
    EXPECT_FALSE(invert_curve(m, 100.5, {1.0}, {1e12}).reachable());
    EXPECT_TRUE(invert_curve(m, 50.0, {1.0}, {1e12}).reachable());
}

TEST(InvertCurve, BeyondQmaxUnreachable) {
    const RegressionModel m{CurveFamily::power_law(), {1, 0.5, 0}};
    EXPECT_FALSE(invert_curve(m, 10.0, {1.0}, {99.0}).reachable());
    EXPECT_TRUE(invert_curve(m, 10.0, {1.0}, {100.0}).reachable());
}

TEST(InvertCurve, RoundTripIsTightForIncreasingFamilies) {
    std::vector<std::pair<RegressionModel, std::vector<double>>> cases{
        {{CurveFamily::logarithmic(), {8, 1, 2}}, {5, 20, 40, 60}},
        {{CurveFamily::arctan(), {0.002, 0.1, -10}, }, {0, 40, 80}},
        {{CurveFamily::algebraic_root(), {0.05, 1.2, 0}, }, {10, 500, 1500}},
        {{CurveFamily::power_law(), {3, 0.4, 1}}, {2, 50, 300}},
    };
    for (const auto& [m, targets] : cases)
        for (double target : targets) {
            const auto inv = invert_curve(m, target, {1.0}, {1e7});
            ASSERT_TRUE(inv.reachable()) << m.family.name() << " " << target;
            const double v = eval_curve(m, *inv.amount);
            EXPECT_GE(v, target) << m.family.name();
            EXPECT_LE(v - target, 1e-6 * std::max(1.0, std::abs(target))) << m.family.name() << " " << target;
        }
}

TEST(InvertCurve, AdditiveMatchesBruteForceGrid) {
    const RegressionModel m{CurveFamily::additive_power_law(2), {1, 0.5, 1, 0.5, 0}};
    const auto inv = invert_curve(m, 4.0, {1.0, 1.0}, {1e6, 1e6});
    ASSERT_TRUE(inv.reachable());
    EXPECT_NEAR((*inv.amount)[0], 4.0, 1e-4);
    EXPECT_NEAR((*inv.amount)[1], 4.0, 1e-4);
    EXPECT_GE(eval_curve(m, *inv.amount), 4.0 - 1e-9);

    // Oracle: cheapest feasible point on a 0.01 grid over [0, 20]^2.
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) {
        const double x = i * 0.01;
        const double rest = 4.0 - std::sqrt(x);
        if (rest < 0) {
            best = std::min(best, x);
            break;
        }
        const double y = std::ceil(rest * rest / 0.01 - 1e-9) * 0.01;
        if (y <= 20.0) best = std::min(best, x + y);
    }
    EXPECT_NEAR(total(*inv.amount), best, 0.02);
    EXPECT_NEAR(total(*inv.amount), 8.0, 1e-6);
}

TEST(InvertCurve, AdditiveAsymmetricCostsMatchLagrangeSolution) {
    // min c1 x + c2 y s.t. a sqrt(x) + b sqrt(y) = V: x = (a V c2 / ...)^2 style closed form.
    const double a = 2, b = 1, c1 = 1, c2 = 3, target = 12;
    const RegressionModel m{CurveFamily::additive_power_law(2), {a, 0.5, b, 0.5, 0}};
    const auto inv = invert_curve(m, target, {c1, c2}, {1e6, 1e6});
    ASSERT_TRUE(inv.reachable());
    // Stationarity: sqrt(x) = a s / (2 c1), sqrt(y) = b s / (2 c2) with s fixed by the constraint.
    const double s = target / (a * a / (2 * c1) + b * b / (2 * c2));
    const double x = std::pow(a * s / (2 * c1), 2), y = std::pow(b * s / (2 * c2), 2);
    EXPECT_NEAR(c1 * (*inv.amount)[0] + c2 * (*inv.amount)[1], c1 * x + c2 * y, 1e-6 * (c1 * x + c2 * y));
    EXPECT_NEAR((*inv.amount)[0], x, 1e-3 * x);
    EXPECT_NEAR((*inv.amount)[1], y, 1e-3 * y);
}

TEST(InvertCurve, TieBreakIsSeeded) {
    // Linear additive curve with equal costs: every split of the budget ties.
    const RegressionModel m{CurveFamily::additive_power_law(2), {1, 1, 1, 1, 0}};
    const auto a = invert_curve(m, 10.0, {1.0, 1.0}, {100, 100}, 7);
    const auto b = invert_curve(m, 10.0, {1.0, 1.0}, {100, 100}, 7);
    ASSERT_TRUE(a.reachable());
    EXPECT_EQ(*a.amount, *b.amount);
    EXPECT_NEAR(total(*a.amount), 10.0, 1e-6);
}

TEST(InvertCurve, AdditiveUnreachableInBox) {
    const RegressionModel m{CurveFamily::additive_power_law(2), {1, 0.5, 1, 0.5, 0}};
    EXPECT_FALSE(invert_curve(m, 30.0, {1.0, 1.0}, {100, 100}).reachable());
}

TEST(InvertCurve, DominanceInTarget) {
    const RegressionModel m{CurveFamily::logarithmic(), {8, 1, 2}};
    double prev = 0.0;
    for (double t = 5; t <= 60; t += 2.5) {
        const auto inv = invert_curve(m, t, {1.0}, {1e9});
        ASSERT_TRUE(inv.reachable());
        EXPECT_GE((*inv.amount)[0], prev);
        prev = (*inv.amount)[0];
    }
}
