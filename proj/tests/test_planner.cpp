#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "loc/planner.hpp"

using namespace loc;
using namespace loc::planner;
using density::GaussianComponent;
using density::GaussianMixture;
using density::KernelDensity;

namespace {

ProblemSpec one_source(double c, double pen, int horizon, double q0 = 0.0) {
    ProblemSpec s;
    s.costs = {c};
    s.penalty = pen;
    s.horizon = horizon;
    s.q0 = {q0};
    return s;
}

CollectionPlan plan1(std::initializer_list<double> qs) {
    CollectionPlan p;
    for (double q : qs) p.schedule.push_back({q});
    return p;
}

// Midpoints of n equal cells on [0, 1] with a negligible bandwidth.
RequirementDistribution near_uniform(std::size_t n) {
    std::vector<double> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    return RequirementDistribution(KernelDensity::from_points(pts, 1e-7));
}

// 1 + Exp(1) through its quantiles. The shift keeps kernel mass off q0 = 0.
RequirementDistribution shifted_exponential(std::size_t n, double h) {
    std::vector<double> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = 1.0 - std::log1p(-(static_cast<double>(i) + 0.5) / static_cast<double>(n));
    return RequirementDistribution(KernelDensity::from_points(pts, h));
}

RequirementDistribution random_kde(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(50, 400);
    std::vector<double> pts(30);
    for (auto& p : pts) p = u(gen);
    return RequirementDistribution(KernelDensity::from_points(pts, 25.0));
}

RequirementDistribution random_gmm(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> m(50, 400), v(200, 3000);
    return RequirementDistribution(GaussianMixture(
        {{0.4, {m(gen), m(gen)}, {v(gen), v(gen)}}, {0.6, {m(gen), m(gen)}, {v(gen), v(gen)}}}));
}

// Recursive form of the collection loss: each round is paid only while the
// requirement is unmet, the penalty only if it is still unmet at the end.
double recursive_loss(const std::vector<double>& q, std::size_t t, double c, double pen, double d_star) {
    const bool unmet = q[t - 1] < d_star;
    if (t == q.size()) return unmet ? pen : 0.0;
    return unmet ? c * (q[t] - q[t - 1]) + recursive_loss(q, t + 1, c, pen, d_star) : 0.0;
}

SolverConfig quick_solver() {
    SolverConfig cfg;
    cfg.round_to_integer = false;
    return cfg;
}

}  // namespace

TEST(RealizedLoss, HandExample) {
    EXPECT_DOUBLE_EQ(realized_loss(plan1({3, 7}), one_source(1, 5, 2), {5.0}), 7.0);
}

TEST(RealizedLoss, AlreadySatisfied) {
    EXPECT_DOUBLE_EQ(realized_loss(plan1({4, 4}), one_source(2, 5, 2, 4), {3.0}), 0.0);
}

TEST(RealizedLoss, PenaltyWhenShort) {
    EXPECT_DOUBLE_EQ(realized_loss(plan1({2, 3}), one_source(1, 50, 2), {10.0}), 53.0);
}

TEST(RealizedLoss, MatchesRecursiveForm) {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> inc(0, 10), dstar(0, 60);
    for (int trial = 0; trial < 500; ++trial) {
        const int horizon = 1 + trial % 5;
        std::vector<double> q{inc(gen)};
        CollectionPlan p;
        for (int t = 0; t < horizon; ++t) {
            q.push_back(q.back() + (trial % 3 == 0 && t == 1 ? 0.0 : inc(gen)));
            p.schedule.push_back({q.back()});
        }
        const double d = dstar(gen);
        EXPECT_NEAR(realized_loss(p, one_source(1.5, 40, horizon, q[0]), {d}), recursive_loss(q, 1, 1.5, 40, d), 1e-9);
    }
}

TEST(RealizedLoss, SeveralSourcesNeedEveryCoordinate) {
    ProblemSpec s;
    s.costs = {1, 2};
    s.penalty = 100;
    s.horizon = 1;
    s.q0 = {0, 0};
    CollectionPlan p{{{10, 10}}};
    EXPECT_DOUBLE_EQ(realized_loss(p, s, {5, 5}), 30.0);
    EXPECT_DOUBLE_EQ(realized_loss(p, s, {5, 11}), 130.0);
}

TEST(RealizedLoss, RejectsDecreasingPlan) {
    EXPECT_THROW(realized_loss(plan1({5, 4}), one_source(1, 5, 2), {1.0}), PreconditionError);
    EXPECT_THROW(realized_loss(plan1({5}), one_source(1, 5, 2), {1.0}), PreconditionError);
}

TEST(ExpectedCost, UniformExample) {
    const auto d = near_uniform(100000);
    EXPECT_NEAR(expected_cost(plan1({0.5}), one_source(1, 2, 1), d), 1.5, 1e-9);
}

TEST(ExpectedCost, UniformExampleMonteCarlo) {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0, 1);
    const auto spec = one_source(1, 2, 1);
    const auto plan = plan1({0.5});
    const int n = 1000000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double l = realized_loss(plan, spec, {u(gen)});
        sum += l;
        sq += l * l;
    }
    const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_NEAR(mean, 1.5, 3 * se);
}

TEST(ExpectedCost, FarRequirementPaysEverything) {
    const RequirementDistribution d(KernelDensity::from_points({1e6}, 1.0));
    EXPECT_NEAR(expected_cost(plan1({3, 8, 20}), one_source(2, 7, 3, 1), d), 2 * 19 + 7, 1e-12);
}

TEST(ExpectedCost, ZeroIncrementsLeavePenalty) {
    const RequirementDistribution d(KernelDensity::from_points({5, 9}, 2.0));
    const auto spec = one_source(3, 11, 3, 6);
    EXPECT_NEAR(expected_cost(plan1({6, 6, 6}), spec, d), 11 * (1 - d.cdf(6.0)), 1e-12);
}

TEST(ExpectedCost, MonteCarloAgreement) {
    std::mt19937_64 gen(7);
    const std::vector<double> centers{80, 120, 150, 260, 300};
    const double h = 20;
    const RequirementDistribution d(KernelDensity::from_points(centers, h));
    const auto spec = one_source(1.3, 400, 3, 50);
    const auto plan = plan1({110, 180, 270});
    std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
    std::normal_distribution<double> kern(0, h);
    const int n = 1000000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double l = realized_loss(plan, spec, {centers[pick(gen)] + kern(gen)});
        sum += l;
        sq += l * l;
    }
    const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_NEAR(mean, expected_cost(plan, spec, d), 4 * se);
}

TEST(ExpectedCost, FrozenRoundsAreCharged) {
    const RequirementDistribution d(KernelDensity::from_points({40, 70}, 10.0));
    auto spec = one_source(1, 100, 3, 10);
    spec.frozen_prefix = {{30}};
    const auto plan = plan1({30, 50, 80});
    const double expected = 20 * (1 - d.cdf(10.0)) + 20 * (1 - d.cdf(30.0)) + 30 * (1 - d.cdf(50.0)) +
                            100 * (1 - d.cdf(80.0));
    EXPECT_NEAR(expected_cost(plan, spec, d), expected, 1e-12);
    EXPECT_THROW(expected_cost(plan1({31, 50, 80}), spec, d), PreconditionError);
}

TEST(Softplus, Values) {
    EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(softplus(1000.0), 1000.0);
    EXPECT_GT(softplus(-700.0), 0.0);
    for (double x = -30; x <= 30; x += 0.25) EXPECT_NEAR(softplus_inverse(softplus(x)), x, 1e-12);
    EXPECT_THROW(softplus_inverse(0.0), PreconditionError);
}

TEST(Reformulation, SameValueAsExpectedCost) {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> inc(0.5, 80);
    const auto d = random_kde(gen);
    for (int trial = 0; trial < 50; ++trial) {
        const int horizon = 1 + trial % 5;
        auto spec = one_source(1.7, 5000, horizon, 20);
        CollectionPlan p;
        double q = 20;
        for (int t = 0; t < horizon; ++t) p.schedule.push_back({q += inc(gen)});
        const double scale = 37.0;
        const auto x = softplus_from_plan(spec, p, scale);
        const double a = expected_cost(p, spec, d);
        EXPECT_NEAR(softplus_objective(spec, d, x, scale), a, 1e-12 * std::abs(a));
        std::vector<double> g;
        EXPECT_NEAR(softplus_objective_and_gradient(spec, d, x, scale, g), a, 1e-12 * std::abs(a));
    }
}

TEST(Reformulation, GradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> nx(0, 1.5);
    for (std::size_t k : {1u, 2u}) {
        for (int horizon : {1, 3, 5}) {
            for (int trial = 0; trial < 50; ++trial) {
                const auto d = k == 1 ? random_kde(gen) : random_gmm(gen);
                ProblemSpec spec;
                spec.costs = Sizes(k, 1.0);
                spec.costs[0] = 2.5;
                spec.penalty = 3000;
                spec.horizon = horizon;
                spec.q0 = Sizes(k, 30.0);
                std::vector<double> x(horizon * k);
                for (auto& v : x) v = nx(gen);
                const double scale = 60.0;
                const auto g = softplus_gradient(spec, d, x, scale);
                double norm = 0;
                for (double v : g) norm = std::max(norm, std::abs(v));
                for (std::size_t i = 0; i < x.size(); ++i) {
                    auto hi = x, lo = x;
                    hi[i] += 1e-5;
                    lo[i] -= 1e-5;
                    const double fd = (softplus_objective(spec, d, hi, scale) - softplus_objective(spec, d, lo, scale)) / 2e-5;
                    EXPECT_NEAR(g[i], fd, 1e-5 * std::max(std::abs(fd), 1e-2 * norm))
                        << "k=" << k << " T=" << horizon << " i=" << i;
                }
            }
        }
    }
}

TEST(Reformulation, FrozenRoundsCarryNoParameters) {
    std::mt19937_64 gen(10);
    const auto d = random_kde(gen);
    auto spec = one_source(1, 3000, 4, 30);
    spec.frozen_prefix = {{60}, {90}};
    const std::vector<double> x{0.3, -0.2};
    const auto g = softplus_gradient(spec, d, x, 50.0);
    ASSERT_EQ(g.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        auto hi = x, lo = x;
        hi[i] += 1e-5;
        lo[i] -= 1e-5;
        const double fd = (softplus_objective(spec, d, hi, 50.0) - softplus_objective(spec, d, lo, 50.0)) / 2e-5;
        EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
    const auto plan = plan_from_softplus(spec, x, 50.0);
    EXPECT_EQ(plan.schedule[0], Sizes{60});
    EXPECT_EQ(plan.schedule[1], Sizes{90});
}

TEST(SolvePlan, ExponentialOneRound) {
    const auto d = shifted_exponential(20000, 0.02);
    const auto sol = solve_plan(one_source(1, 10, 1), d, quick_solver());
    EXPECT_NEAR(sol.continuous.schedule[0][0], 1.0 + std::log(10.0), 1e-3);
    EXPECT_FALSE(sol.diagnostics.no_improvement);
}

TEST(SolvePlan, VanishingPenaltyCollectsNothing) {
    std::mt19937_64 gen(11);
    const auto d = random_kde(gen);
    const auto spec = one_source(1, 1e-9, 3, 40);
    const auto sol = solve_plan(spec, d, quick_solver());
    EXPECT_LT(sol.continuous.schedule.back()[0] - 40.0, 1e-3);
    EXPECT_EQ(solve_plan(spec, d).plan.schedule.back(), Sizes{40});
}

TEST(SolvePlan, LargerPenaltyCollectsMore) {
    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 6; ++trial) {
        const auto d = random_kde(gen);
        const int horizon = 1 + trial % 3;
        double last = 0;
        for (double pen : {300.0, 1000.0, 3000.0, 10000.0}) {
            const auto sol = solve_plan(one_source(1, pen, horizon, 10), d, quick_solver());
            const double qt = sol.continuous.schedule.back()[0];
            EXPECT_GE(qt, last - 1e-6) << "P=" << pen << " T=" << horizon;
            last = qt;
        }
    }
}

TEST(SolvePlan, InvariantToCommonRescaling) {
    std::mt19937_64 gen(13);
    const auto d = random_kde(gen);
    const auto a = solve_plan(one_source(1, 2000, 3, 10), d, quick_solver());
    const auto b = solve_plan(one_source(1000, 2000000, 3, 10), d, quick_solver());
    for (std::size_t t = 0; t < 3; ++t)
        EXPECT_NEAR(a.continuous.schedule[t][0], b.continuous.schedule[t][0], 1e-6 * a.continuous.schedule[t][0]);
}

TEST(SolvePlan, PlansAreFeasible) {
    std::mt19937_64 gen(14);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t k = 1 + trial % 2;
        const auto d = k == 1 ? random_kde(gen) : random_gmm(gen);
        ProblemSpec spec;
        spec.costs = Sizes(k, 1.0);
        spec.penalty = 500.0 * (trial + 1);
        spec.horizon = 1 + trial % 4;
        spec.q0 = Sizes(k, 25.0);
        SolverConfig cfg;
        cfg.max_steps = 100;
        const auto sol = solve_plan(spec, d, cfg);
        for (const auto* p : {&sol.plan, &sol.continuous}) {
            ASSERT_EQ(p->schedule.size(), static_cast<std::size_t>(spec.horizon));
            Sizes prev = spec.q0;
            for (const auto& q : p->schedule) {
                EXPECT_TRUE(dominates(q, prev));
                prev = q;
            }
        }
        for (const auto& q : sol.plan.schedule)
            for (double v : q) EXPECT_EQ(v, std::ceil(v));
    }
}

TEST(SolvePlan, KeepsFrozenPrefix) {
    std::mt19937_64 gen(15);
    const auto d = random_kde(gen);
    auto spec = one_source(1, 5000, 3, 10);
    spec.frozen_prefix = {{70}};
    const auto sol = solve_plan(spec, d, quick_solver());
    EXPECT_EQ(sol.plan.schedule[0], Sizes{70});
    EXPECT_GE(sol.plan.schedule[1][0], 70.0);
}

TEST(SolvePlan, NoImprovementReturnsInit) {
    std::mt19937_64 gen(16);
    const auto d = random_kde(gen);
    SolverConfig cfg = quick_solver();
    cfg.grid = {{Method::Momentum, 1e-300}};
    cfg.max_steps = 1;
    const auto spec = one_source(1, 5000, 1, 10);
    const auto sol = solve_plan(spec, d, cfg);
    EXPECT_TRUE(sol.diagnostics.no_improvement);
    EXPECT_DOUBLE_EQ(sol.objective, sol.diagnostics.initial_objective);
}

TEST(SolvePlan, RejectsBadConfig) {
    std::mt19937_64 gen(17);
    const auto d = random_kde(gen);
    SolverConfig cfg;
    cfg.grid.clear();
    EXPECT_THROW(solve_plan(one_source(1, 10, 1), d, cfg), PreconditionError);
    cfg = {};
    cfg.max_steps = 0;
    EXPECT_THROW(solve_plan(one_source(1, 10, 1), d, cfg), PreconditionError);
}

TEST(RoundPlan, CeilThenRunningMax) {
    auto spec = one_source(1, 1, 3, 0.5);
    const auto r = round_plan(plan1({1.2, 1.7, 4.0}), spec);
    EXPECT_EQ(r.schedule[0], Sizes{2});
    EXPECT_EQ(r.schedule[1], Sizes{2});
    EXPECT_EQ(r.schedule[2], Sizes{4});
}

TEST(AnalyticOneRound, Exponential) {
    const auto d = shifted_exponential(20000, 0.02);
    const auto sol = analytic_one_round(one_source(1, 10, 1), d);
    ASSERT_FALSE(sol.boundary);
    EXPECT_NEAR(sol.q1, 1.0 + std::log(10.0), 1e-3);
    EXPECT_NEAR(sol.epsilon, 0.1, 1e-3);
    // secant condition 0.9 / (q1 - q0) >= c / P
    EXPECT_GE((d.cdf(sol.q1) - d.cdf(0.0)) / sol.q1, 0.1);
}

TEST(AnalyticOneRound, ExpensiveDataIsBoundary) {
    const RequirementDistribution d(KernelDensity::from_points({100, 110, 120}, 5.0));
    const auto sol = analytic_one_round(one_source(1, 10, 1, 0), d);
    EXPECT_TRUE(sol.boundary);
    EXPECT_DOUBLE_EQ(sol.q1, 0.0);
}

TEST(AnalyticOneRound, AgreesWithSolver) {
    std::mt19937_64 gen(18);
    for (int trial = 0; trial < 5; ++trial) {
        const auto d = random_kde(gen);
        const auto spec = one_source(1, 2000.0 * (trial + 1), 1, 20);
        const auto a = analytic_one_round(spec, d);
        const auto s = solve_plan(spec, d, quick_solver());
        ASSERT_FALSE(a.boundary);
        EXPECT_NEAR(s.continuous.schedule[0][0], a.q1, 1e-3 * a.q1);
    }
}

TEST(AnalyticOneRound, DegenerateDensityIsRejected) {
    const auto fit = density::fit_kde({7.0, 7.0, 7.0}, {1.0});
    EXPECT_THROW(analytic_one_round(one_source(1, 10, 1), fit.distribution), AssumptionViolated);
}
