#include <gtest/gtest.h>

#include "support/bridge.hpp"

#include <random>

using namespace nsw;

namespace {

double objective(const std::vector<double>& p, const std::vector<double>& v) {
    double total = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) total += p[k] * v[k];
    return total;
}

/// |S| = 1, R(.,0) = 0, R(.,1) = 1, point-mass self loop.
struct SingleState {
    TransitionKernel kernel = TransitionKernel::identity(1);
    RewardTable rewards{1, {0.0, 1.0}};
    std::vector<ConfidenceSet> sets = point_mass_sets(kernel);
};

std::vector<ConfidenceSet> random_sets(std::size_t n, std::mt19937_64& rng, double max_radius) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<ConfidenceSet> sets;
    for (std::size_t k = 0; k < n * 2; ++k)
        sets.push_back({oracle::random_distribution(n, rng), max_radius * unit(rng), 0.1 * unit(rng)});
    return sets;
}

} // namespace

TEST(InnerMaximize, ZeroRadiusReturnsCentre) {
    const std::vector<double> c = {0.2, 0.3, 0.5};
    EXPECT_EQ(inner_maximize(c, 0.0, std::vector<double>{3, 1, 2}), c);
}

TEST(InnerMaximize, HandComputedShift) {
    const std::vector<double> c = {0.5, 0.5};
    const std::vector<double> v = {1.0, 0.0};
    const auto p = inner_maximize(c, 0.4, v);
    EXPECT_NEAR(p[0], 0.7, 1e-15);
    EXPECT_NEAR(p[1], 0.3, 1e-15);
    EXPECT_NEAR(objective(p, v), 0.7, 1e-15);
    EXPECT_NEAR(oracle::l1_ball_lp(c, 0.4, v), 0.7, 1e-12);
}

TEST(InnerMaximize, LargeRadiusGivesPointMassOnBest) {
    const std::vector<double> c = {0.2, 0.3, 0.5};
    const auto p = inner_maximize(c, 2.0, std::vector<double>{0.0, 5.0, 1.0});
    EXPECT_EQ(p, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(InnerMaximize, FlatValuesReturnCentre) {
    const std::vector<double> c = {0.2, 0.3, 0.5};
    EXPECT_EQ(inner_maximize(c, 0.7, std::vector<double>{2.0, 2.0, 2.0}), c);
}

TEST(InnerMaximize, NegativeRadiusThrows) {
    EXPECT_THROW(inner_maximize(std::vector<double>{1.0}, -0.1, std::vector<double>{1.0}), InvalidRadius);
}

TEST(InnerMaximize, MatchesLinearProgramOnRandomInstances) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 5);
        const auto c = oracle::random_distribution(n, rng);
        std::vector<double> v(n);
        for (auto& x : v) x = 10.0 * unit(rng) - 5.0;
        const double r = 2.5 * unit(rng);
        const auto p = inner_maximize(c, r, v);
        EXPECT_NEAR(objective(p, v), oracle::l1_ball_lp(c, r, v), 1e-9);
        double sum = 0.0;
        for (double x : p) {
            EXPECT_GE(x, 0.0);
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_TRUE(contains(ConfidenceSet{c, r, 0.0}, p));
    }
}

TEST(EviSweep, SingleStateHandTrace) {
    SingleState m;
    QTable q(1);
    q = evi_sweep(q, m.sets, m.rewards, 0.5, 0.5);
    EXPECT_DOUBLE_EQ(q(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(q(0, 1), 0.5);
    q = evi_sweep(q, m.sets, m.rewards, 0.5, 0.5);
    EXPECT_DOUBLE_EQ(q(0, 0), 0.25);
    EXPECT_DOUBLE_EQ(q(0, 1), 0.75);
}

TEST(EviSweep, MyopicWhenDiscountIsZero) {
    std::mt19937_64 rng(4);
    const auto arm = oracle::random_arm(3, rng);
    const auto rewards = oracle::to_rewards(arm);
    const auto sets = random_sets(3, rng, 1.0);
    QTable q0(3);
    for (auto& v : q0.values) v = 7.0;
    const auto q = evi_sweep(q0, sets, rewards, 0.3, 0.0);
    for (std::size_t s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) EXPECT_DOUBLE_EQ(q(s, a), rewards(s, a) - 0.3 * a);
}

TEST(RunEvi, SingleStateClosedForm) {
    SingleState m;
    EviStop stop;
    stop.max_iters = 100;
    stop.tol = 0.0;
    const auto result = run_evi(QTable(1), m.sets, m.rewards, 0.5, 0.5, stop);
    EXPECT_NEAR(result.q(0, 0), 0.5, 1e-8);
    EXPECT_NEAR(result.q(0, 1), 1.0, 1e-8);
    EXPECT_LE(result.sweeps, 100u);
}

TEST(RunEvi, UnitRewardGeometricSeries) {
    const auto k = TransitionKernel::from_nested({{{0.3, 0.7}, {0.6, 0.4}}, {{0.1, 0.9}, {0.5, 0.5}}});
    const RewardTable r(2, {1, 1, 1, 1});
    const auto result = run_evi(QTable(2), point_mass_sets(k), r, 0.0, 0.9, EviStop::defaults(0.9));
    for (double v : result.q.values) EXPECT_NEAR(v, 10.0, 1e-5);
    EXPECT_TRUE(result.converged);
}

TEST(RunEvi, DiscountOfOneIsRejected) {
    SingleState m;
    EXPECT_THROW(run_evi(QTable(1), m.sets, m.rewards, 0.0, 1.0, EviStop{}), NonConvergence);
}

TEST(RunEvi, NeedsACapOrATolerance) {
    SingleState m;
    EviStop stop;
    stop.max_iters = 0;
    stop.tol = 0.0;
    EXPECT_THROW(run_evi(QTable(1), m.sets, m.rewards, 0.0, 0.5, stop), InvalidConfig);
}

TEST(RunEvi, DefaultStopRule) {
    const auto stop = EviStop::defaults(0.9);
    EXPECT_NEAR(stop.tol, 1e-7, 1e-20);
    EXPECT_EQ(stop.max_iters, 1620u);
}

TEST(RunEvi, PointMassSetsMatchClassicalValueIteration) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 5);
        const double gamma = std::vector<double>{0.5, 0.9, 0.99}[static_cast<std::size_t>(trial % 3)];
        const auto arm = oracle::random_arm(n, rng);
        const double lambda = unit(rng);
        EviStop stop;
        stop.tol = 1e-11 * (1.0 - gamma);
        stop.max_iters = 100000;
        const auto result = run_evi(QTable(n), point_mass_sets(oracle::to_kernel(arm)), oracle::to_rewards(arm), lambda,
                                    gamma, stop);
        const auto reference = oracle::value_iteration(arm, lambda, gamma);
        for (std::size_t s = 0; s < n; ++s)
            for (int a = 0; a < 2; ++a) EXPECT_NEAR(result.q(s, a), reference[s][a], 1e-8);
    }
}

TEST(RunEvi, ContractionHoldsEverySweep) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
        const auto arm = oracle::random_arm(n, rng);
        const auto sets = random_sets(n, rng, 1.5);
        EviStop stop;
        stop.tol = 1e-8;
        stop.max_iters = 10000;
        stop.trace = true;
        const auto result = run_evi(QTable(n), sets, oracle::to_rewards(arm), 0.4, 0.9, stop);
        for (std::size_t k = 1; k < result.changes.size(); ++k)
            EXPECT_LE(result.changes[k], 0.9 * result.changes[k - 1] + 1e-12);
    }
}

TEST(RunEvi, EnlargingSetsNeverLowersValues) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
        const auto arm = oracle::random_arm(n, rng);
        auto sets = random_sets(n, rng, 0.8);
        const auto small = run_evi(QTable(n), sets, oracle::to_rewards(arm), 0.2, 0.9, EviStop::defaults(0.9));
        for (auto& s : sets) s.radius += 0.3;
        const auto large = run_evi(QTable(n), sets, oracle::to_rewards(arm), 0.2, 0.9, EviStop::defaults(0.9));
        for (std::size_t k = 0; k < small.q.values.size(); ++k)
            EXPECT_GE(large.q.values[k], small.q.values[k] - 1e-5);
    }
}

TEST(RunEvi, OptimisticRowsLieInTheirSets) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
        const auto arm = oracle::random_arm(n, rng);
        const auto sets = random_sets(n, rng, 2.0);
        const auto result = run_evi(QTable(n), sets, oracle::to_rewards(arm), 0.1, 0.9, EviStop::defaults(0.9));
        EXPECT_TRUE(validate_kernel(result.optimistic, 0.0).ok());
        for (std::size_t s = 0; s < n; ++s)
            for (int a = 0; a < 2; ++a)
                EXPECT_TRUE(contains(sets[s * 2 + static_cast<std::size_t>(a)], result.optimistic.row(s, a)));
    }
}

TEST(RunEvi, ConvergedValuesWithinPerArmBound) {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
        const auto arm = oracle::random_arm(n, rng);
        const double lambda = 3.0 * static_cast<double>(trial % 5);
        const auto result =
            run_evi(QTable(n), random_sets(n, rng, 2.0), oracle::to_rewards(arm), lambda, 0.9, EviStop::defaults(0.9));
        for (double v : result.q.values) EXPECT_LE(std::abs(v), (1.0 + lambda) / 0.1 + 1e-9);
    }
}

TEST(RunEvi, DeterministicGivenInputs) {
    std::mt19937_64 rng(15);
    const auto arm = oracle::random_arm(4, rng);
    const auto sets = random_sets(4, rng, 1.0);
    const auto a = run_evi(QTable(4), sets, oracle::to_rewards(arm), 0.3, 0.95, EviStop::defaults(0.95));
    const auto b = run_evi(QTable(4), sets, oracle::to_rewards(arm), 0.3, 0.95, EviStop::defaults(0.95));
    EXPECT_EQ(a.q.values, b.q.values);
    EXPECT_TRUE(a.optimistic == b.optimistic);
}
