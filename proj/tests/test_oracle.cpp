#include <gtest/gtest.h>

#include "support/bridge.hpp"

#include <random>

using namespace nsw;

namespace {

struct Instance {
    std::vector<oracle::PlainArm> plain;
    std::vector<TransitionKernel> kernels;
    std::vector<RewardTable> rewards;
    std::vector<std::size_t> states;

    std::vector<ArmModel> models() const {
        std::vector<ArmModel> out;
        for (std::size_t i = 0; i < kernels.size(); ++i) out.push_back({&kernels[i], &rewards[i]});
        return out;
    }
};

Instance random_instance(std::size_t arms, std::size_t n, std::mt19937_64& rng) {
    Instance inst;
    for (std::size_t i = 0; i < arms; ++i) {
        inst.plain.push_back(oracle::random_arm(n, rng));
        inst.kernels.push_back(oracle::to_kernel(inst.plain.back()));
        inst.rewards.push_back(oracle::to_rewards(inst.plain.back()));
        inst.states.push_back(rng() % n);
    }
    return inst;
}

RmabConfig oracle_config(std::size_t arms, std::size_t n, std::size_t budget, double gamma) {
    RmabConfig c;
    c.num_arms = arms;
    c.num_states = n;
    c.budget = budget;
    c.discount = gamma;
    c.lambda_cap = RmabConfig::default_lambda_cap(gamma);
    return c;
}

OracleSolution solve(const Instance& inst, const RmabConfig& c) {
    const auto models = inst.models();
    return solve_oracle(models, inst.states, c, EviStop::defaults(c.discount),
                        DualState::default_tolerance(c.lambda_cap));
}

} // namespace

TEST(EvaluatePolicyValue, UnitRewardAllActiveAtZeroMultiplier) {
    const auto k = TransitionKernel::identity(2);
    const RewardTable r(2, {1.0, 1.0, 1.0, 1.0});
    const std::vector<ArmModel> arms(3, ArmModel{&k, &r});
    const std::vector<ArmPolicy> policies(3, ArmPolicy::constant(2, 1.0));
    const std::vector<std::size_t> states = {0, 1, 0};
    EXPECT_NEAR(evaluate_policy_value(policies, arms, states, 0.0, 0.9, 1), 30.0, 1e-12);
}

TEST(EvaluatePolicyValue, HalfRewardTwoArms) {
    const auto k = TransitionKernel::identity(1);
    const RewardTable r(1, {0.5, 0.5});
    const std::vector<ArmModel> arms(2, ArmModel{&k, &r});
    const std::vector<ArmPolicy> policies(2, ArmPolicy::constant(1, 0.0));
    const std::vector<std::size_t> states = {0, 0};
    EXPECT_NEAR(evaluate_policy_value(policies, arms, states, 0.0, 0.5, 1), 2.0, 1e-14);
}

TEST(EvaluatePolicyValue, MultiplierOffsetAndActivationCost) {
    const auto k = TransitionKernel::identity(1);
    const RewardTable r(1, {0.0, 0.0});
    const std::vector<ArmModel> arms = {{&k, &r}};
    const std::vector<std::size_t> states = {0};
    const std::vector<ArmPolicy> active = {ArmPolicy::constant(1, 1.0)};
    EXPECT_NEAR(evaluate_policy_value(active, arms, states, 0.3, 0.5, 1), 0.0, 1e-14);
    const std::vector<ArmPolicy> passive = {ArmPolicy::constant(1, 0.0)};
    EXPECT_NEAR(evaluate_policy_value(passive, arms, states, 0.3, 0.5, 1), 0.6, 1e-14);
}

TEST(EvaluateArmPolicy, MatchesGaussianElimination) {
    std::mt19937_64 rng(201);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 5;
        const auto arm = oracle::random_arm(n, rng);
        const auto k = oracle::to_kernel(arm);
        const auto r = oracle::to_rewards(arm);
        const std::uint32_t mask = static_cast<std::uint32_t>(rng() % (1u << n));
        std::vector<std::uint8_t> actions(n);
        for (std::size_t s = 0; s < n; ++s) actions[s] = (mask >> s) & 1u;
        const auto v = evaluate_arm_policy({&k, &r}, ArmPolicy::deterministic(actions), 0.7, 0.95);
        const auto reference = oracle::policy_value(arm, mask, 0.7, 0.95);
        for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(v[s], reference[s], 1e-10);
    }
}

TEST(EvaluateArmPolicy, AgreesWithMonteCarloRollouts) {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 5; ++trial) {
        const auto arm = oracle::random_arm(3, rng);
        const auto k = oracle::to_kernel(arm);
        const auto r = oracle::to_rewards(arm);
        const std::vector<std::uint8_t> actions = {1, 0, static_cast<std::uint8_t>(trial % 2)};
        const auto exact = evaluate_arm_policy({&k, &r}, ArmPolicy::deterministic(actions), 0.2, 0.9);
        const std::vector<int> policy(actions.begin(), actions.end());
        const auto [mean, se] = oracle::rollout_value(arm, policy, 0, 0.2, 0.9, 20000, 250, 900 + trial);
        EXPECT_LE(std::abs(mean - exact[0]), 3.0 * se + 1e-9) << "trial " << trial;
    }
}

TEST(EvaluateArmPolicy, StochasticPolicyIsLinearInMixture) {
    std::mt19937_64 rng(203);
    const auto arm = oracle::random_arm(1, rng);
    const auto k = oracle::to_kernel(arm);
    const auto r = oracle::to_rewards(arm);
    const double v0 = evaluate_arm_policy({&k, &r}, ArmPolicy::constant(1, 0.0), 0.4, 0.8)[0];
    const double v1 = evaluate_arm_policy({&k, &r}, ArmPolicy::constant(1, 1.0), 0.4, 0.8)[0];
    const double vh = evaluate_arm_policy({&k, &r}, ArmPolicy::constant(1, 0.25), 0.4, 0.8)[0];
    EXPECT_NEAR(vh, 0.75 * v0 + 0.25 * v1, 1e-12);
}

TEST(SolveArmExact, MatchesValueIteration) {
    std::mt19937_64 rng(204);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 5;
        const auto arm = oracle::random_arm(n, rng);
        const auto k = oracle::to_kernel(arm);
        const auto r = oracle::to_rewards(arm);
        const auto opt = solve_arm_exact({&k, &r}, 0.5, 0.9, 0);
        const auto q = oracle::value_iteration(arm, 0.5, 0.9);
        for (std::size_t s = 0; s < n; ++s) EXPECT_NEAR(opt.values[s], std::max(q[s][0], q[s][1]), 1e-9);
        EXPECT_NEAR(opt.intercept + 0.5 * opt.slope, opt.values[0], 1e-9);
    }
}

TEST(SolveOracle, MatchesExhaustiveEnumeration) {
    std::mt19937_64 rng(205);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t arms = 2 + trial % 2;
        const std::size_t n = 2 + (trial / 2) % 2;
        const auto inst = random_instance(arms, n, rng);
        const auto c = oracle_config(arms, n, 1, 0.9);
        const auto solution = solve(inst, c);
        const auto [value, lambda] = oracle::exhaustive_minmax(inst.plain, inst.states, 0.9, 1, c.lambda_cap);
        EXPECT_NEAR(solution.value, value, 1e-6) << "trial " << trial;
        EXPECT_NEAR(solution.lambda, lambda, 1e-6) << "trial " << trial;
    }
}

TEST(SolveOracle, ActionIndependentModelHasZeroMultiplier) {
    std::mt19937_64 rng(206);
    Instance inst;
    for (std::size_t i = 0; i < 3; ++i) {
        oracle::PlainArm arm = oracle::random_arm(3, rng);
        for (std::size_t s = 0; s < 3; ++s) {
            arm.p[s][1] = arm.p[s][0];
            arm.r[s][1] = arm.r[s][0];
        }
        inst.plain.push_back(arm);
        inst.kernels.push_back(oracle::to_kernel(arm));
        inst.rewards.push_back(oracle::to_rewards(arm));
        inst.states.push_back(i % 3);
    }
    const auto solution = solve(inst, oracle_config(3, 3, 1, 0.9));
    EXPECT_EQ(solution.lambda, 0.0);
    for (const auto& p : solution.policies)
        for (auto a : p) EXPECT_EQ(a, 0);
}

TEST(SolveOracle, ValueWithinJointBound) {
    std::mt19937_64 rng(207);
    for (int trial = 0; trial < 20; ++trial) {
        const auto inst = random_instance(3, 3, rng);
        const auto c = oracle_config(3, 3, 1, 0.9);
        const auto solution = solve(inst, c);
        EXPECT_LE(std::abs(solution.value), value_bound(3, c.lambda_cap, 0.9) + 1e-9);
        EXPECT_GE(solution.lambda, 0.0);
        EXPECT_LE(solution.lambda, c.lambda_cap);
    }
}

TEST(RegretStep, OracleAgainstItselfIsZero) {
    std::mt19937_64 rng(208);
    for (int trial = 0; trial < 20; ++trial) {
        const auto inst = random_instance(3, 3, rng);
        const auto c = oracle_config(3, 3, 1, 0.9);
        const auto solution = solve(inst, c);
        const auto policies = solution.arm_policies();
        const auto models = inst.models();
        const auto r = regret_step(solution, policies, models, inst.states, 0.9, 1, 4.5);
        EXPECT_EQ(r.gap, 0.0);
        EXPECT_EQ(r.cum_regret, 4.5);
    }
}

TEST(RegretStep, OracleBeatsEveryDeterministicPolicy) {
    std::mt19937_64 rng(209);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst = random_instance(2, 2, rng);
        const auto c = oracle_config(2, 2, 1, 0.9);
        const auto solution = solve(inst, c);
        const auto models = inst.models();
        for (std::uint32_t m0 = 0; m0 < 4; ++m0)
            for (std::uint32_t m1 = 0; m1 < 4; ++m1) {
                const std::vector<std::uint8_t> a0 = {static_cast<std::uint8_t>(m0 & 1u), static_cast<std::uint8_t>(m0 >> 1)};
                const std::vector<std::uint8_t> a1 = {static_cast<std::uint8_t>(m1 & 1u), static_cast<std::uint8_t>(m1 >> 1)};
                const std::vector<ArmPolicy> policies = {ArmPolicy::deterministic(a0), ArmPolicy::deterministic(a1)};
                EXPECT_GE(regret_step(solution, policies, models, inst.states, 0.9, 1).gap, -1e-9);
            }
    }
}

TEST(OptimismAudit, SlackAndSummary) {
    OptimismSummary summary;
    summary.add(optimism_audit(1.0, 1.0 + 0.5e-6, true));
    summary.add(optimism_audit(1.0, 1.1, true));
    summary.add(optimism_audit(0.0, 1.0, false));
    EXPECT_EQ(summary.steps, 3u);
    EXPECT_EQ(summary.good_steps, 2u);
    EXPECT_EQ(summary.good_holds, 1u);
    EXPECT_DOUBLE_EQ(summary.good_rate(), 0.5);
    EXPECT_EQ(OptimismSummary{}.good_rate(), 1.0);
}

TEST(ValueBoundAudit, CountsViolations) {
    ValueBoundAudit audit;
    audit.bound = 10.0;
    audit.check(9.0);
    audit.check(-10.0);
    audit.check(10.5);
    EXPECT_EQ(audit.evaluations, 3u);
    EXPECT_EQ(audit.violations, 1u);
    EXPECT_EQ(audit.max_abs, 10.5);
}

TEST(BadEventAudit, ZeroBudgetGivesZeroBound) {
    const std::vector<std::uint8_t> flags(20, 0);
    const auto audit = bad_event_audit(flags, 5, 0.0, 0.1);
    EXPECT_EQ(audit.bound, 0.0);
    EXPECT_TRUE(audit.q.empty());
    EXPECT_TRUE(audit.within_bound());
}

TEST(BadEventAudit, ZeroExplorationGivesUnboundedRatio) {
    const std::vector<std::uint8_t> flags(20, 1);
    const auto audit = bad_event_audit(flags, 5, 1.0, 0.0);
    EXPECT_TRUE(std::isinf(audit.bound));
    EXPECT_TRUE(audit.within_bound());
}

TEST(BadEventAudit, GreedySeparationOnAHandTrace) {
    std::vector<std::uint8_t> flags(30, 0);
    for (std::size_t t : {2u, 4u, 9u, 10u, 25u}) flags[t - 1] = 1;
    const auto audit = bad_event_audit(flags, 3, 1.0, 0.5);
    EXPECT_EQ(audit.q, (std::vector<std::size_t>{2, 9, 25}));
    EXPECT_DOUBLE_EQ(audit.bound, 6.0);
}

TEST(BadEventAudit, SeparationAndContainmentOnRandomFlags) {
    std::mt19937_64 rng(210);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t horizon = 1 + rng() % 200;
        const std::size_t window = 1 + rng() % 20;
        std::vector<std::uint8_t> flags(horizon);
        for (auto& f : flags) f = (rng() % 10) == 0 ? 1 : 0;
        const auto audit = bad_event_audit(flags, window, 1.0, 0.2);
        for (std::size_t k = 1; k < audit.q.size(); ++k) EXPECT_GT(audit.q[k] - audit.q[k - 1], window);
        for (std::size_t t : audit.q) {
            EXPECT_TRUE(flags[t - 1]);
            EXPECT_NE(std::find(audit.extended.begin(), audit.extended.end(), t), audit.extended.end());
        }
        for (std::size_t t = 1; t <= horizon; ++t)
            if (flags[t - 1]) {
                EXPECT_NE(std::find(audit.extended.begin(), audit.extended.end(), t), audit.extended.end());
            }
        for (std::size_t t : audit.extended) EXPECT_LE(t, horizon);
    }
}

TEST(IsBadStep, DetectsEscapedRow) {
    const auto k = TransitionKernel::from_nested({{{0.9, 0.1}, {0.5, 0.5}}, {{0.5, 0.5}, {0.5, 0.5}}});
    const RewardTable r(2, {0, 0, 0, 0});
    const std::vector<ArmModel> arms = {{&k, &r}};
    std::vector<std::vector<ConfidenceSet>> sets = {std::vector<ConfidenceSet>(4, ConfidenceSet{{0.5, 0.5}, 0.2, 0.1})};
    EXPECT_TRUE(is_bad_step(arms, sets));
    sets[0][0].exploration = 0.6;
    EXPECT_FALSE(is_bad_step(arms, sets));
}

TEST(WindowedKernelAverage, TracksSlidingWindow) {
    WindowedKernelAverage truth(2, 2);
    truth.record(1, 0, 1, std::vector<double>{1.0, 0.0});
    truth.record(2, 0, 1, std::vector<double>{0.0, 1.0});
    truth.record(3, 0, 1, std::vector<double>{0.5, 0.5});
    EXPECT_EQ(truth.count(0, 1), 2u);
    const auto avg = truth.average(0, 1);
    EXPECT_DOUBLE_EQ(avg[0], 0.25);
    EXPECT_DOUBLE_EQ(avg[1], 0.75);
    EXPECT_TRUE(truth.average(1, 0).empty());
}

TEST(GoodEvent, IgnoresExplorationBonus) {
    WindowedKernelAverage truth(2, 5);
    truth.record(1, 0, 0, std::vector<double>{0.9, 0.1});
    std::vector<ConfidenceSet> sets(4, ConfidenceSet{{0.5, 0.5}, 0.2, 5.0});
    EXPECT_FALSE(good_event_holds(truth, sets));
    sets[0].radius = 0.8;
    EXPECT_TRUE(good_event_holds(truth, sets));
}
