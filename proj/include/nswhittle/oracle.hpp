#pragma once

// The regret comparator: exact min-max solutions under the true kernels, exact
// policy evaluation of the Lagrangian value, regret bookkeeping, and the
// optimism / bad-event / value-bound audits.

#include "core.hpp"
#include "dual_policy.hpp"
#include "estimator.hpp"
#include "evi.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <vector>

namespace nsw {

/// True dynamics and rewards of one arm at one time step.
struct ArmModel {
    const TransitionKernel* kernel = nullptr;
    const RewardTable* rewards = nullptr;
};

/// Per-state activation probability; deterministic policies use 0 or 1.
struct ArmPolicy {
    std::vector<double> active_prob;

    static ArmPolicy deterministic(std::span<const std::uint8_t> actions) {
        ArmPolicy p;
        p.active_prob.reserve(actions.size());
        for (auto a : actions) p.active_prob.push_back(a ? 1.0 : 0.0);
        return p;
    }

    static ArmPolicy constant(std::size_t num_states, double prob) { return {std::vector<double>(num_states, prob)}; }
};

/// Bound N (1 + U_lambda) / (1 - gamma) on any joint Lagrangian value.
inline double value_bound(std::size_t num_arms, double lambda_cap, double discount) {
    return static_cast<double>(num_arms) * (1.0 + lambda_cap) / (1.0 - discount);
}

namespace detail {

/// (I - gamma P_pi)^{-1} applied to the policy reward and to the activation vector.
struct PolicyLinearSystem {
    Eigen::VectorXd reward_part;
    Eigen::VectorXd activation_part;
};

inline PolicyLinearSystem solve_policy_system(const ArmModel& arm, const ArmPolicy& policy, double discount) {
    const std::size_t n = arm.kernel->num_states();
    if (policy.active_prob.size() != n || arm.rewards->num_states() != n)
        throw DimensionMismatch("policy, kernel and rewards disagree on |S|");
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::VectorXd reward(static_cast<Eigen::Index>(n));
    Eigen::VectorXd activation(static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s) {
        const double p = policy.active_prob[s];
        const auto passive = arm.kernel->row(s, kPassive);
        const auto active = arm.kernel->row(s, kActive);
        for (std::size_t sn = 0; sn < n; ++sn)
            system(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(sn)) -=
                discount * ((1.0 - p) * passive[sn] + p * active[sn]);
        reward(static_cast<Eigen::Index>(s)) = (1.0 - p) * (*arm.rewards)(s, kPassive) + p * (*arm.rewards)(s, kActive);
        activation(static_cast<Eigen::Index>(s)) = p;
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    return {lu.solve(reward), lu.solve(activation)};
}

} // namespace detail

/// Exact v = (I - gamma P_pi)^{-1} r_lambda with r_lambda(s) = E_pi[R(s,a) - lambda a].
inline std::vector<double> evaluate_arm_policy(const ArmModel& arm, const ArmPolicy& policy, double lambda,
                                               double discount) {
    if (!(discount >= 0.0 && discount < 1.0)) throw NonConvergence("policy evaluation needs discount in [0,1)");
    const auto sys = detail::solve_policy_system(arm, policy, discount);
    std::vector<double> v(static_cast<std::size_t>(sys.reward_part.size()));
    for (std::size_t s = 0; s < v.size(); ++s)
        v[s] = sys.reward_part(static_cast<Eigen::Index>(s)) - lambda * sys.activation_part(static_cast<Eigen::Index>(s));
    return v;
}

/**
 * Joint Lagrangian value at `states`: sum of per-arm values plus the constraint
 * offset lambda K / (1 - gamma). Arms evolve independently, so no joint state
 * space is formed.
 */
inline double evaluate_policy_value(std::span<const ArmPolicy> policies, std::span<const ArmModel> arms,
                                    std::span<const std::size_t> states, double lambda, double discount,
                                    std::size_t budget) {
    if (policies.size() != arms.size() || states.size() != arms.size())
        throw DimensionMismatch("one policy and state per arm expected");
    double total = lambda * static_cast<double>(budget) / (1.0 - discount);
    for (std::size_t i = 0; i < arms.size(); ++i)
        total += evaluate_arm_policy(arms[i], policies[i], lambda, discount)[states[i]];
    return total;
}

// *******************************************************
// Oracle
// *******************************************************

/// Optimal deterministic policy of one arm at a fixed multiplier.
struct ArmOptimum {
    std::vector<std::uint8_t> policy;
    std::vector<double> values;
    QTable q;
    /// value(state) = intercept + slope * lambda along this policy.
    double intercept = 0.0;
    double slope = 0.0;
};

/**
 * Policy iteration at a fixed multiplier, started from `warm` (ties keep the
 * current action). Exact up to the linear solves.
 */
inline ArmOptimum solve_arm_exact(const ArmModel& arm, double lambda, double discount, std::size_t state,
                                  std::vector<std::uint8_t> warm = {}) {
    const std::size_t n = arm.kernel->num_states();
    if (warm.size() != n) warm.assign(n, 0);
    ArmOptimum out;
    out.policy = std::move(warm);
    const std::size_t max_rounds = 4 * n + 64;
    for (std::size_t round = 0; round < max_rounds; ++round) {
        const auto sys = detail::solve_policy_system(arm, ArmPolicy::deterministic(out.policy), discount);
        out.values.resize(n);
        for (std::size_t s = 0; s < n; ++s)
            out.values[s] = sys.reward_part(static_cast<Eigen::Index>(s)) -
                            lambda * sys.activation_part(static_cast<Eigen::Index>(s));
        out.q = QTable(n);
        for (std::size_t s = 0; s < n; ++s)
            for (int a = 0; a < static_cast<int>(kNumActions); ++a) {
                double expected = 0.0;
                const auto row = arm.kernel->row(s, a);
                for (std::size_t sn = 0; sn < n; ++sn) expected += row[sn] * out.values[sn];
                out.q(s, a) = (*arm.rewards)(s, a) - lambda * a + discount * expected;
            }
        out.intercept = sys.reward_part(static_cast<Eigen::Index>(state));
        out.slope = -sys.activation_part(static_cast<Eigen::Index>(state));
        bool changed = false;
        for (std::size_t s = 0; s < n; ++s) {
            const int current = out.policy[s];
            const int other = 1 - current;
            const double scale = 1.0 + std::abs(out.q(s, current));
            if (out.q(s, other) > out.q(s, current) + 1e-13 * scale) {
                out.policy[s] = static_cast<std::uint8_t>(other);
                changed = true;
            }
        }
        if (!changed) break;
    }
    return out;
}

struct OracleSolution {
    double lambda = 0.0;
    /// Joint optimal value at the queried joint state.
    double value = 0.0;
    std::vector<std::vector<std::uint8_t>> policies;
    std::vector<double> indices;
    std::size_t dual_evaluations = 0;
    std::size_t polish_rounds = 0;

    std::vector<ArmPolicy> arm_policies() const {
        std::vector<ArmPolicy> out;
        for (const auto& p : policies) out.push_back(ArmPolicy::deterministic(p));
        return out;
    }
};

namespace detail {

struct DualPiece {
    double lambda = 0.0;
    double intercept = 0.0;
    double slope = 0.0;
    std::vector<ArmOptimum> arms;

    double at(double x) const { return intercept + slope * x; }
    double value() const { return at(lambda); }
};

inline DualPiece exact_piece(std::span<const ArmModel> arms, std::span<const std::size_t> states, double lambda,
                             double discount, std::size_t budget, const DualPiece* warm) {
    DualPiece piece;
    piece.lambda = lambda;
    piece.slope = static_cast<double>(budget) / (1.0 - discount);
    for (std::size_t i = 0; i < arms.size(); ++i) {
        auto opt = solve_arm_exact(arms[i], lambda, discount, states[i],
                                   warm ? warm->arms[i].policy : std::vector<std::uint8_t>{});
        piece.intercept += opt.intercept;
        piece.slope += opt.slope;
        piece.arms.push_back(std::move(opt));
    }
    return piece;
}

/**
 * Smallest exact minimiser of the convex piecewise-linear dual on [0, cap].
 *
 * First locates a minimiser starting from the bracket [lo, hi]: each round
 * intersects the supporting lines at both ends, and the intersection is optimal
 * once the dual there does not rise above them. Then walks left along
 * supporting lines to the left end of the minimising interval.
 */
inline DualPiece polish_dual(std::span<const ArmModel> arms, std::span<const std::size_t> states, double lo, double hi,
                             double cap, double discount, std::size_t budget, std::size_t& rounds) {
    constexpr std::size_t max_rounds = 200;
    auto tolerance = [](double v) { return 1e-12 * (1.0 + std::abs(v)); };
    DualPiece left = exact_piece(arms, states, lo, discount, budget, nullptr);
    DualPiece right = exact_piece(arms, states, hi, discount, budget, &left);
    DualPiece best;
    bool found = false;
    rounds = 0;
    for (; rounds < max_rounds && !found; ++rounds) {
        if (left.slope >= 0.0) {
            if (left.lambda <= 0.0) {
                best = left;
                found = true;
                break;
            }
            left = exact_piece(arms, states, 0.0, discount, budget, &left);
            continue;
        }
        if (right.slope < 0.0) {
            if (right.lambda >= cap) {
                best = right;
                found = true;
                break;
            }
            right = exact_piece(arms, states, cap, discount, budget, &right);
            continue;
        }
        if (right.lambda - left.lambda <= 0.0) {
            best = left;
            found = true;
            break;
        }
        const double x =
            std::clamp((right.intercept - left.intercept) / (left.slope - right.slope), left.lambda, right.lambda);
        DualPiece mid = exact_piece(arms, states, x, discount, budget, &left);
        if (mid.value() <= left.at(x) + tolerance(mid.value())) {
            best = std::move(mid);
            found = true;
        } else if (mid.slope < 0.0) {
            left = std::move(mid);
        } else {
            right = std::move(mid);
        }
    }
    if (!found) best = left.value() <= right.value() ? left : right;

    // Leftward pass: the minimising set is an interval; find its left end.
    const double level = best.value();
    if (best.lambda <= 0.0) return best;
    DualPiece probe = left.lambda < best.lambda ? left : exact_piece(arms, states, 0.0, discount, budget, &best);
    if (probe.value() <= level + tolerance(level)) {
        if (probe.lambda <= 0.0) return probe;
        probe = exact_piece(arms, states, 0.0, discount, budget, &probe);
        if (probe.value() <= level + tolerance(level)) return probe;
    }
    for (; rounds < 2 * max_rounds; ++rounds) {
        if (!(probe.slope < 0.0)) break;
        const double x = std::clamp(probe.lambda + (level - probe.value()) / probe.slope, probe.lambda, best.lambda);
        DualPiece next = exact_piece(arms, states, x, discount, budget, &probe);
        if (next.value() <= level + tolerance(level)) return next;
        if (x <= probe.lambda) break;
        probe = std::move(next);
    }
    return best;
}

} // namespace detail

/**
 * min over lambda in [0, U] of max over policies of the joint value at `states`
 * under the true kernels.
 *
 * Runs the same golden-section search over EVI values used by the learner, with
 * point-mass confidence sets at the true rows, then refines the bracket exactly
 * using policy iteration and the piecewise-linear shape of the dual.
 */
inline OracleSolution solve_oracle(std::span<const ArmModel> arms, std::span<const std::size_t> states,
                                   const RmabConfig& config, const EviStop& stop, double tolerance) {
    if (arms.size() != states.size()) throw DimensionMismatch("one state per arm expected");
    std::vector<std::vector<ConfidenceSet>> sets;
    std::vector<ArmProblem> problems;
    sets.reserve(arms.size());
    for (const auto& arm : arms) sets.push_back(point_mass_sets(*arm.kernel));
    for (std::size_t i = 0; i < arms.size(); ++i) problems.push_back({sets[i], arms[i].rewards, states[i]});

    DualState dual;
    dual.upper = config.lambda_cap;
    dual.tolerance = tolerance;
    dual.tie_tolerance = default_tie_tolerance(arms.size(), stop, config.discount);
    minimize_dual(dual, [&](double lambda) {
        return dual_objective(lambda, problems, config.discount, config.budget, stop);
    });

    const double lo = std::max(0.0, dual.lambda - tolerance);
    const double hi = std::min(config.lambda_cap, dual.bracket_upper + tolerance);
    OracleSolution out;
    out.dual_evaluations = dual.evaluations;
    auto best = detail::polish_dual(arms, states, lo, hi, config.lambda_cap, config.discount, config.budget,
                                    out.polish_rounds);
    out.lambda = best.lambda;
    for (std::size_t i = 0; i < arms.size(); ++i) {
        const auto& opt = best.arms[i];
        out.policies.push_back(opt.policy);
        out.indices.push_back(opt.q(states[i], kActive) - opt.q(states[i], kPassive));
    }
    // Same evaluation path as any compared policy, so pi* scores a gap of exactly zero.
    const auto policies = out.arm_policies();
    out.value = evaluate_policy_value(policies, arms, states, out.lambda, config.discount, config.budget);
    return out;
}

// *******************************************************
// Regret and audits
// *******************************************************

struct RegretRecord {
    std::size_t t = 0;
    double v_opt = 0.0;
    double v_alg = 0.0;
    double gap = 0.0;
    double cum_regret = 0.0;
    /// Multiplier the acting policy used (0 for policies without one).
    double lambda_t = 0.0;
    std::size_t active_count = 0;
    std::size_t constraint_violation = 0;
    bool bad_event = false;
};

/// Both values at the oracle multiplier under the true kernels; the gap is kept signed.
inline RegretRecord regret_step(const OracleSolution& oracle, std::span<const ArmPolicy> policies,
                                std::span<const ArmModel> arms, std::span<const std::size_t> states, double discount,
                                std::size_t budget, double previous_cumulative = 0.0) {
    RegretRecord r;
    r.v_opt = oracle.value;
    r.v_alg = evaluate_policy_value(policies, arms, states, oracle.lambda, discount, budget);
    r.gap = r.v_opt - r.v_alg;
    r.cum_regret = previous_cumulative + r.gap;
    return r;
}

/// Slack allowed when comparing an optimistic value against the oracle value.
inline constexpr double kOptimismSlack = 1e-6;

struct OptimismCheck {
    double optimistic_value = 0.0;
    double oracle_value = 0.0;
    bool good_event = false;
    bool holds = false;
};

inline OptimismCheck optimism_audit(double optimistic_value, double oracle_value, bool good_event) {
    return {optimistic_value, oracle_value, good_event, optimistic_value >= oracle_value - kOptimismSlack};
}

struct OptimismSummary {
    std::size_t steps = 0;
    std::size_t holds = 0;
    std::size_t good_steps = 0;
    std::size_t good_holds = 0;

    void add(const OptimismCheck& c) {
        ++steps;
        holds += c.holds ? 1 : 0;
        if (c.good_event) {
            ++good_steps;
            good_holds += c.holds ? 1 : 0;
        }
    }

    void merge(const OptimismSummary& o) {
        steps += o.steps;
        holds += o.holds;
        good_steps += o.good_steps;
        good_holds += o.good_holds;
    }

    /// Fraction of good-event steps on which optimism held (1 when there are none).
    double good_rate() const {
        return good_steps == 0 ? 1.0 : static_cast<double>(good_holds) / static_cast<double>(good_steps);
    }
};

struct ValueBoundAudit {
    double bound = 0.0;
    std::size_t evaluations = 0;
    std::size_t violations = 0;
    double max_abs = 0.0;

    /// Tolerance added to the bound.
    static constexpr double slack = 1e-6;

    void check(double value) {
        ++evaluations;
        max_abs = std::max(max_abs, std::abs(value));
        if (!(std::abs(value) <= bound + slack)) ++violations;
    }

    void merge(const ValueBoundAudit& o) {
        bound = std::max(bound, o.bound);
        evaluations += o.evaluations;
        violations += o.violations;
        max_abs = std::max(max_abs, o.max_abs);
    }
};

struct BadEventAudit {
    /// Q_T: bad steps more than W after the previous member.
    std::vector<std::size_t> q;
    /// Q~_T: Q_T with the W steps following each member.
    std::vector<std::size_t> extended;
    double bound = 0.0;
    std::size_t window = 0;

    /// ceil(W B / eta), saturated for an unbounded ratio.
    std::size_t bound_ceiling() const {
        if (!std::isfinite(bound)) return std::numeric_limits<std::size_t>::max();
        return static_cast<std::size_t>(std::ceil(bound - 1e-9));
    }

    bool within_bound() const { return extended.size() <= bound_ceiling(); }
};

/**
 * Builds Q_T greedily in time order from per-step bad-event flags
 * (flags[t-1] for step t), its W-extension, and the W B / eta bound.
 */
inline BadEventAudit bad_event_audit(std::span<const std::uint8_t> bad_flags, std::size_t window, double budget,
                                     double exploration) {
    BadEventAudit audit;
    audit.window = window;
    if (budget <= 0.0)
        audit.bound = 0.0;
    else if (exploration <= 0.0)
        audit.bound = std::numeric_limits<double>::infinity();
    else
        audit.bound = static_cast<double>(window) * budget / exploration;
    const std::size_t horizon = bad_flags.size();
    for (std::size_t t = 1; t <= horizon; ++t) {
        if (!bad_flags[t - 1]) continue;
        if (audit.q.empty() || t - audit.q.back() > window) audit.q.push_back(t);
    }
    for (std::size_t t0 : audit.q)
        for (std::size_t t = t0; t <= std::min(horizon, t0 + window); ++t) audit.extended.push_back(t);
    return audit;
}

/// Some true row escapes its confidence set (with exploration bonus).
inline bool is_bad_step(std::span<const ArmModel> arms, std::span<const std::vector<ConfidenceSet>> sets) {
    for (std::size_t i = 0; i < arms.size(); ++i) {
        const auto& kernel = *arms[i].kernel;
        for (std::size_t s = 0; s < kernel.num_states(); ++s)
            for (int a = 0; a < static_cast<int>(kNumActions); ++a)
                if (!contains(sets[i][s * kNumActions + static_cast<std::size_t>(a)], kernel.row(s, a))) return true;
    }
    return false;
}

/**
 * Running windowed average of the true rows visited by one arm, the quantity
 * the good event compares with the empirical centre. Mirrors the window of a
 * SlidingWindowStats fed the same records.
 */
class WindowedKernelAverage {
public:
    WindowedKernelAverage(std::size_t num_states, std::size_t window)
        : num_states_(num_states), window_(window), sums_(num_states * kNumActions * num_states, 0.0),
          counts_(num_states * kNumActions, 0) {}

    void record(std::size_t t, std::size_t s, int a, std::span<const double> true_row) {
        const std::size_t pair = s * kNumActions + static_cast<std::size_t>(a);
        entries_.push_back({t, pair, {true_row.begin(), true_row.end()}});
        add(pair, true_row, 1.0);
        ++counts_[pair];
        while (!entries_.empty() && entries_.front().time + window_ < t + 1) {
            const auto& e = entries_.front();
            add(e.pair, e.row, -1.0);
            --counts_[e.pair];
            entries_.pop_front();
        }
    }

    std::size_t count(std::size_t s, int a) const { return counts_[s * kNumActions + static_cast<std::size_t>(a)]; }

    /// Average true row over the in-window visits of (s,a); empty if unvisited.
    std::vector<double> average(std::size_t s, int a) const {
        const std::size_t pair = s * kNumActions + static_cast<std::size_t>(a);
        if (counts_[pair] == 0) return {};
        std::vector<double> out(num_states_);
        for (std::size_t sn = 0; sn < num_states_; ++sn)
            out[sn] = sums_[pair * num_states_ + sn] / static_cast<double>(counts_[pair]);
        return out;
    }

private:
    struct Entry {
        std::size_t time;
        std::size_t pair;
        std::vector<double> row;
    };

    void add(std::size_t pair, std::span<const double> row, double sign) {
        for (std::size_t sn = 0; sn < num_states_; ++sn) sums_[pair * num_states_ + sn] += sign * row[sn];
    }

    std::size_t num_states_;
    std::size_t window_;
    std::deque<Entry> entries_;
    std::vector<double> sums_;
    std::vector<std::size_t> counts_;
};

/**
 * Good event at one step for one arm: every visited (s,a) has its windowed true
 * average inside the exploration-free confidence set.
 */
inline bool good_event_holds(const WindowedKernelAverage& truth, std::span<const ConfidenceSet> sets) {
    const std::size_t n = sets.empty() ? 0 : sets.front().center.size();
    for (std::size_t s = 0; s < n; ++s)
        for (int a = 0; a < static_cast<int>(kNumActions); ++a) {
            if (truth.count(s, a) == 0) continue;
            const auto& set = sets[s * kNumActions + static_cast<std::size_t>(a)];
            if (l1_distance(truth.average(s, a), set.center) > set.radius + kMembershipSlack) return false;
        }
    return true;
}

} // namespace nsw
