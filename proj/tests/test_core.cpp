#include <gtest/gtest.h>

#include "support/bridge.hpp"

#include <random>

using namespace nsw;

namespace {

TransitionKernel two_state(std::vector<double> row00, std::vector<double> row01, std::vector<double> row10,
                           std::vector<double> row11) {
    return TransitionKernel::from_nested({{row00, row01}, {row10, row11}});
}

} // namespace

TEST(RmabConfig, RejectsBudgetAboveArms) {
    RmabConfig c;
    c.num_arms = 2;
    c.budget = 3;
    EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(RmabConfig, RejectsDiscountOfOne) {
    RmabConfig c;
    c.discount = 1.0;
    EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(RmabConfig, RejectsDeltaOutsideOpenUnitInterval) {
    RmabConfig c;
    c.failure_prob = 1.0;
    EXPECT_THROW(c.validate(), InvalidConfig);
    c.failure_prob = 0.0;
    EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(RmabConfig, DefaultLambdaCapIsTwoOverOneMinusGamma) {
    EXPECT_DOUBLE_EQ(RmabConfig::default_lambda_cap(0.9), 20.0);
    EXPECT_DOUBLE_EQ(RmabConfig::default_lambda_cap(0.5), 4.0);
}

TEST(ValidateKernel, IdentityIsValid) {
    EXPECT_TRUE(validate_kernel(TransitionKernel::identity(3), 0.1).ok());
}

TEST(ValidateKernel, RowSummingToMoreThanOneIsRejected) {
    const auto k = two_state({0.5, 0.6}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    const auto check = validate_kernel(k, 0.0);
    EXPECT_EQ(check.kind, KernelCheck::Kind::non_stochastic_row);
    EXPECT_EQ(check.state, 0u);
    EXPECT_EQ(check.action, 0);
    EXPECT_NEAR(check.value, 1.1, 1e-15);
}

TEST(ValidateKernel, EntryBelowFloorIsRejected) {
    const auto k = two_state({0.5, 0.5}, {0.05, 0.95}, {0.5, 0.5}, {0.5, 0.5});
    const auto check = validate_kernel(k, 0.1);
    EXPECT_EQ(check.kind, KernelCheck::Kind::below_p_min);
    EXPECT_EQ(check.action, 1);
    EXPECT_EQ(check.next_state, 0u);
    EXPECT_DOUBLE_EQ(check.value, 0.05);
}

TEST(ValidateKernel, NegativeEntryIsOutOfRange) {
    const auto k = two_state({1.2, -0.2}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    EXPECT_EQ(validate_kernel(k, 0.0).kind, KernelCheck::Kind::entry_out_of_range);
}

TEST(ValidateKernel, SumWithinTolerancePasses) {
    const auto k = two_state({0.5, 0.5 + 5e-13}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    EXPECT_TRUE(validate_kernel(k, 0.0).ok());
}

TEST(TransitionKernel, WrongSizeThrows) {
    EXPECT_THROW(TransitionKernel(2, std::vector<double>(7, 0.0)), DimensionMismatch);
}

TEST(RewardTable, RejectsOutOfRangeReward) {
    EXPECT_THROW(RewardTable(1, {0.0, 1.5}), InvalidConfig);
}

TEST(L1Distance, IdenticalIsZero) {
    const std::vector<double> p = {0.2, 0.3, 0.5};
    EXPECT_EQ(l1_distance(p, p), 0.0);
}

TEST(L1Distance, DisjointSupportsIsTwo) {
    EXPECT_EQ(l1_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 2.0);
}

TEST(L1Distance, HandComputedValue) {
    EXPECT_NEAR(l1_distance(std::vector<double>{0.7, 0.3}, std::vector<double>{0.5, 0.5}), 0.4, 1e-15);
}

TEST(L1Distance, SizeMismatchThrows) {
    EXPECT_THROW(l1_distance(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), DimensionMismatch);
}

TEST(L1Distance, SymmetricBoundedAndTriangle) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + trial % 5;
        const auto p = oracle::random_distribution(n, rng);
        const auto q = oracle::random_distribution(n, rng);
        const auto r = oracle::random_distribution(n, rng);
        const double pq = l1_distance(p, q);
        EXPECT_EQ(pq, l1_distance(q, p));
        EXPECT_GE(pq, 0.0);
        EXPECT_LE(pq, 2.0);
        EXPECT_LE(l1_distance(p, r), pq + l1_distance(q, r) + 1e-12);
    }
}

TEST(VariationBudget, StationaryScheduleIsZero) {
    const auto k = two_state({0.3, 0.7}, {0.6, 0.4}, {0.5, 0.5}, {0.9, 0.1});
    const std::vector<std::vector<TransitionKernel>> schedule = {std::vector<TransitionKernel>(5, k),
                                                                 std::vector<TransitionKernel>(5, k)};
    const auto b = variation_budget(schedule);
    EXPECT_EQ(b.total, 0.0);
    ASSERT_EQ(b.per_step.size(), 4u);
    for (const auto& step : b.per_step)
        for (double v : step) EXPECT_EQ(v, 0.0);
}

TEST(VariationBudget, SingleChangeOfPointThree) {
    const auto before = two_state({0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    const auto after = two_state({0.5, 0.5}, {0.65, 0.35}, {0.5, 0.5}, {0.5, 0.5});
    const std::vector<std::vector<TransitionKernel>> schedule = {{before, before, after, after, after}};
    const auto b = variation_budget(schedule);
    EXPECT_NEAR(b.total, 0.3, 1e-12);
    EXPECT_NEAR(b.per_step[1][0], 0.3, 1e-12);
    EXPECT_EQ(b.per_step[0][0], 0.0);
    EXPECT_EQ(b.per_step[2][0], 0.0);
}

TEST(VariationBudget, AdditiveOverArms) {
    const auto before = two_state({0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    const auto after = two_state({0.5, 0.5}, {0.65, 0.35}, {0.5, 0.5}, {0.5, 0.5});
    const std::vector<std::vector<TransitionKernel>> schedule = {{before, before, after, after, after},
                                                                 {before, after, after, after, after}};
    const auto b = variation_budget(schedule);
    EXPECT_NEAR(b.total, 0.6, 1e-12);
    EXPECT_NEAR(b.arm_total(0), 0.3, 1e-12);
    EXPECT_NEAR(b.arm_total(1), 0.3, 1e-12);
}

TEST(VariationBudget, ReversalInvariant) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::vector<TransitionKernel>> schedule(2);
        for (auto& arm : schedule)
            for (int t = 0; t < 6; ++t) arm.push_back(oracle::to_kernel(oracle::random_arm(3, rng)));
        auto reversed = schedule;
        for (auto& arm : reversed) std::reverse(arm.begin(), arm.end());
        EXPECT_NEAR(variation_budget(schedule).total, variation_budget(reversed).total, 1e-12);
    }
}

TEST(VariationBudget, EntriesBoundedByTwoAndSumToTotal) {
    std::mt19937_64 rng(5);
    std::vector<std::vector<TransitionKernel>> schedule(3);
    for (auto& arm : schedule)
        for (int t = 0; t < 8; ++t) arm.push_back(oracle::to_kernel(oracle::random_arm(2, rng)));
    const auto b = variation_budget(schedule);
    double sum = 0.0;
    for (const auto& step : b.per_step)
        for (double v : step) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 2.0);
            sum += v;
        }
    EXPECT_NEAR(sum, b.total, 1e-9);
}

TEST(VariationBudget, UnequalLengthsThrow) {
    const auto k = TransitionKernel::identity(2);
    const std::vector<std::vector<TransitionKernel>> schedule = {{k, k}, {k}};
    EXPECT_THROW(variation_budget(schedule), DimensionMismatch);
}
