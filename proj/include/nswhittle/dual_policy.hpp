#pragma once

// Multiplier search over the summed per-arm optimistic values, Whittle-style
// indices, and budgeted top-K activation.

#include "core.hpp"
#include "estimator.hpp"
#include "evi.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace nsw {

struct DualState {
    double lambda = 0.0;
    double lower = 0.0;
    double upper = 20.0;
    /// Final bracket width (kappa).
    double tolerance = 2.1e-3;
    /// Objective differences up to this count as ties and keep the left part of the bracket.
    double tie_tolerance = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    /// Right end of the final bracket [lambda, bracket_upper].
    double bracket_upper = 0.0;

    /// kappa = 1e-4 (1 + cap).
    static double default_tolerance(double lambda_cap) { return 1e-4 * (1.0 + lambda_cap); }
};

/**
 * Golden-section search of a convex objective on [state.lower, state.upper].
 *
 * Shrinks the bracket until its width is at most state.tolerance and returns
 * its left endpoint, so flat regions resolve to their smallest minimiser.
 */
template <class Objective>
double minimize_dual(DualState& state, Objective&& objective) {
    constexpr double inv_phi = 0.6180339887498948482;
    double a = state.lower;
    double b = state.upper;
    state.iterations = 0;
    state.evaluations = 0;
    if (b - a <= state.tolerance) {
        state.lambda = a;
        state.bracket_upper = b;
        return a;
    }
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = objective(c);
    double fd = objective(d);
    state.evaluations = 2;
    while (b - a > state.tolerance) {
        if (fc <= fd + state.tie_tolerance) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
        ++state.evaluations;
        ++state.iterations;
    }
    state.lambda = a;
    state.bracket_upper = b;
    return a;
}

/**
 * Largest gap between two dual evaluations that is still read as a tie: each
 * per-arm EVI value is within gamma tol / (1 - gamma) of its fixed point.
 */
inline double default_tie_tolerance(std::size_t num_arms, const EviStop& stop, double discount) {
    return 2.0 * static_cast<double>(num_arms) * stop.tol / (1.0 - discount);
}

/// Everything the dual objective needs from one arm.
struct ArmProblem {
    std::span<const ConfidenceSet> sets;
    const RewardTable* rewards = nullptr;
    std::size_t state = 0;
};

/**
 * g(lambda) = sum_i max_a Qbar_{lambda,i}(s_i, a) + lambda K / (1 - gamma),
 * each Qbar from a fresh EVI run started at zero.
 */
inline double dual_objective(double lambda, std::span<const ArmProblem> arms, double discount, std::size_t budget,
                             const EviStop& stop) {
    double total = lambda * static_cast<double>(budget) / (1.0 - discount);
    for (const auto& arm : arms) {
        const QTable q0(arm.rewards->num_states());
        total += evi_values(q0, arm.sets, *arm.rewards, lambda, discount, stop).state_value(arm.state);
    }
    return total;
}

/// Index per arm: Q(s_i, 1) - Q(s_i, 0).
inline std::vector<double> whittle_indices(std::span<const QTable> tables, std::span<const std::size_t> states) {
    if (tables.size() != states.size()) throw DimensionMismatch("one Q table per arm state expected");
    std::vector<double> indices(tables.size());
    for (std::size_t i = 0; i < tables.size(); ++i)
        indices[i] = tables[i](states[i], kActive) - tables[i](states[i], kPassive);
    return indices;
}

/// Deterministic per-arm policy: active wherever Q(s,1) >= Q(s,0).
inline std::vector<std::uint8_t> greedy_policy(const QTable& q) {
    std::vector<std::uint8_t> policy(q.num_states);
    for (std::size_t s = 0; s < q.num_states; ++s) policy[s] = q(s, kActive) >= q(s, kPassive) ? 1 : 0;
    return policy;
}

struct PolicyDecision {
    std::vector<double> indices;
    std::vector<std::uint8_t> actions;
    std::size_t active_count = 0;
    /// Arms whose index is nonnegative; more than K means the per-arm rule overshot the budget.
    std::size_t eligible_count = 0;
};

/**
 * Activates the K largest nonnegative indices; ties go to the lower arm id.
 * Arms with negative index are never activated, so fewer than K may be active.
 */
inline PolicyDecision select_actions(std::span<const double> indices, std::size_t budget) {
    if (budget > indices.size()) throw InvalidConfig("budget exceeds number of arms");
    PolicyDecision decision;
    decision.indices.assign(indices.begin(), indices.end());
    decision.actions.assign(indices.size(), 0);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (indices[i] >= 0.0) order.push_back(i);
    decision.eligible_count = order.size();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return indices[a] > indices[b]; });
    const std::size_t take = std::min(budget, order.size());
    for (std::size_t k = 0; k < take; ++k) decision.actions[order[k]] = 1;
    decision.active_count = take;
    return decision;
}

struct DualSolution {
    double lambda = 0.0;
    /// Converged EVI per arm at lambda.
    std::vector<EviResult> arms;
    std::vector<double> indices;
    std::vector<std::vector<std::uint8_t>> policies;
    std::size_t evaluations = 0;
};

/**
 * Golden-section search for the multiplier, then one more EVI per arm at the
 * chosen multiplier to obtain Q tables, optimistic kernels, indices and
 * greedy policies.
 */
inline DualSolution solve_dual(std::span<const ArmProblem> arms, double discount, std::size_t budget,
                               const EviStop& stop, DualState& state) {
    if (state.tie_tolerance == 0.0) state.tie_tolerance = default_tie_tolerance(arms.size(), stop, discount);
    DualSolution solution;
    solution.lambda =
        minimize_dual(state, [&](double lambda) { return dual_objective(lambda, arms, discount, budget, stop); });
    solution.evaluations = state.evaluations;
    std::vector<QTable> tables;
    std::vector<std::size_t> states;
    for (const auto& arm : arms) {
        const QTable q0(arm.rewards->num_states());
        solution.arms.push_back(run_evi(q0, arm.sets, *arm.rewards, solution.lambda, discount, stop));
        tables.push_back(solution.arms.back().q);
        states.push_back(arm.state);
        solution.policies.push_back(greedy_policy(tables.back()));
    }
    solution.indices = whittle_indices(tables, states);
    return solution;
}

} // namespace nsw
