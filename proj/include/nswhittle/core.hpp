#pragma once

// Shared domain types for non-stationary restless bandit instances: configuration,
// per-arm transition kernels and reward tables, and variation-budget arithmetic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsw {

/// Actions are fixed to {passive = 0, active = 1}.
inline constexpr std::size_t kNumActions = 2;
inline constexpr int kPassive = 0;
inline constexpr int kActive = 1;

/// Absolute tolerance on a transition row summing to one.
inline constexpr double kRowSumTolerance = 1e-12;

// *******************************************************
// Errors
// *******************************************************

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class InfeasibleBudget : public Error {
public:
    using Error::Error;
};

class PMinInfeasible : public Error {
public:
    using Error::Error;
};

class HorizonExceeded : public Error {
public:
    using Error::Error;
};

class NonMonotoneTime : public Error {
public:
    using Error::Error;
};

class InvalidDelta : public Error {
public:
    using Error::Error;
};

class InvalidRadius : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

namespace detail {
template <class... Args>
std::string concat(const Args&... args) {
    std::ostringstream out;
    (out << ... << args);
    return out.str();
}
} // namespace detail

// *******************************************************
// Configuration
// *******************************************************

struct RmabConfig {
    std::size_t num_arms = 1;
    std::size_t num_states = 2;
    /// K: maximum number of arms activated per step.
    std::size_t budget = 1;
    double discount = 0.9;
    std::size_t horizon = 1000;
    /// delta in the confidence radius.
    double failure_prob = 0.1;
    /// Upper end of the multiplier search interval.
    double lambda_cap = 20.0;
    double p_min_floor = 0.05;

    static double default_lambda_cap(double discount) { return 2.0 / (1.0 - discount); }

    void validate() const {
        if (num_arms == 0) throw InvalidConfig("num_arms must be positive");
        if (num_states == 0) throw InvalidConfig("num_states must be positive");
        if (budget > num_arms)
            throw InvalidConfig(detail::concat("budget K=", budget, " exceeds num_arms N=", num_arms));
        if (!(discount >= 0.0 && discount < 1.0))
            throw InvalidConfig(detail::concat("discount must lie in [0,1), got ", discount));
        if (horizon == 0) throw InvalidConfig("horizon must be positive");
        if (!(failure_prob > 0.0 && failure_prob < 1.0))
            throw InvalidConfig(detail::concat("failure_prob must lie in (0,1), got ", failure_prob));
        if (!(lambda_cap >= 0.0) || !std::isfinite(lambda_cap))
            throw InvalidConfig(detail::concat("lambda_cap must be finite and >= 0, got ", lambda_cap));
        if (!(p_min_floor > 0.0 && p_min_floor <= 1.0))
            throw InvalidConfig(detail::concat("p_min_floor must lie in (0,1], got ", p_min_floor));
    }
};

// *******************************************************
// Kernels and rewards
// *******************************************************

/**
 * Row-stochastic tensor P(s'|s,a) for one arm, stored flat as [s][a][s'].
 *
 * Immutable after construction. Construction only checks the shape; use
 * validate_kernel for stochasticity and the probability floor.
 */
class TransitionKernel {
public:
    TransitionKernel() = default;

    TransitionKernel(std::size_t num_states, std::vector<double> probs)
        : num_states_(num_states), probs_(std::move(probs)) {
        if (probs_.size() != num_states_ * kNumActions * num_states_)
            throw DimensionMismatch(detail::concat("kernel with ", num_states_, " states needs ",
                                                   num_states_ * kNumActions * num_states_,
                                                   " entries, got ", probs_.size()));
    }

    /// From nested [s][a][s'] arrays.
    static TransitionKernel from_nested(const std::vector<std::vector<std::vector<double>>>& nested) {
        const std::size_t n = nested.size();
        std::vector<double> flat;
        flat.reserve(n * kNumActions * n);
        for (const auto& by_action : nested) {
            if (by_action.size() != kNumActions)
                throw DimensionMismatch("kernel rows must have exactly two actions");
            for (const auto& row : by_action) {
                if (row.size() != n) throw DimensionMismatch("kernel row length differs from |S|");
                flat.insert(flat.end(), row.begin(), row.end());
            }
        }
        return TransitionKernel(n, std::move(flat));
    }

    /// Every state self-loops with probability one under both actions.
    static TransitionKernel identity(std::size_t num_states) {
        std::vector<double> flat(num_states * kNumActions * num_states, 0.0);
        for (std::size_t s = 0; s < num_states; ++s)
            for (std::size_t a = 0; a < kNumActions; ++a)
                flat[(s * kNumActions + a) * num_states + s] = 1.0;
        return TransitionKernel(num_states, std::move(flat));
    }

    std::size_t num_states() const { return num_states_; }

    std::span<const double> row(std::size_t s, int a) const {
        return {probs_.data() + (s * kNumActions + static_cast<std::size_t>(a)) * num_states_, num_states_};
    }

    double operator()(std::size_t s, int a, std::size_t s_next) const { return row(s, a)[s_next]; }

    std::span<const double> data() const { return probs_; }

    bool operator==(const TransitionKernel&) const = default;

private:
    std::size_t num_states_ = 0;
    std::vector<double> probs_;
};

/// Known, stationary per-arm rewards R(s,a) in [0,1], stored as [s][a].
class RewardTable {
public:
    RewardTable() = default;

    RewardTable(std::size_t num_states, std::vector<double> rewards)
        : num_states_(num_states), rewards_(std::move(rewards)) {
        if (rewards_.size() != num_states_ * kNumActions)
            throw DimensionMismatch(detail::concat("reward table with ", num_states_, " states needs ",
                                                   num_states_ * kNumActions, " entries, got ",
                                                   rewards_.size()));
        for (double r : rewards_)
            if (!(r >= 0.0 && r <= 1.0))
                throw InvalidConfig(detail::concat("reward ", r, " outside [0,1]"));
    }

    static RewardTable from_nested(const std::vector<std::vector<double>>& nested) {
        std::vector<double> flat;
        for (const auto& row : nested) {
            if (row.size() != kNumActions) throw DimensionMismatch("reward rows must have two actions");
            flat.insert(flat.end(), row.begin(), row.end());
        }
        return RewardTable(nested.size(), std::move(flat));
    }

    std::size_t num_states() const { return num_states_; }
    double operator()(std::size_t s, int a) const { return rewards_[s * kNumActions + static_cast<std::size_t>(a)]; }
    std::span<const double> data() const { return rewards_; }

    bool operator==(const RewardTable&) const = default;

private:
    std::size_t num_states_ = 0;
    std::vector<double> rewards_;
};

// *******************************************************
// Validation and distances
// *******************************************************

/// Outcome of validate_kernel. `kind == ok` iff the kernel is valid.
struct KernelCheck {
    enum class Kind { ok, non_stochastic_row, entry_out_of_range, below_p_min };

    Kind kind = Kind::ok;
    std::size_t state = 0;
    int action = 0;
    std::size_t next_state = 0;
    /// Offending entry, or the row sum for non_stochastic_row.
    double value = 0.0;

    bool ok() const { return kind == Kind::ok; }
    explicit operator bool() const { return ok(); }

    std::string message() const {
        switch (kind) {
        case Kind::ok: return "ok";
        case Kind::non_stochastic_row:
            return detail::concat("NonStochasticRow(s=", state, ", a=", action, ", sum=", value, ")");
        case Kind::entry_out_of_range:
            return detail::concat("EntryOutOfRange(s=", state, ", a=", action, ", s'=", next_state,
                                  ", value=", value, ")");
        case Kind::below_p_min:
            return detail::concat("BelowPMinFloor(s=", state, ", a=", action, ", s'=", next_state,
                                  ", value=", value, ")");
        }
        return "unknown";
    }
};

/**
 * Checks that every row is a distribution (entries in [0,1], sum within
 * kRowSumTolerance of one) and that every nonzero entry is at least p_min.
 * Rows are scanned in (s, a) order and the first problem is reported.
 */
inline KernelCheck validate_kernel(const TransitionKernel& kernel, double p_min) {
    using Kind = KernelCheck::Kind;
    const std::size_t n = kernel.num_states();
    for (std::size_t s = 0; s < n; ++s) {
        for (int a = 0; a < static_cast<int>(kNumActions); ++a) {
            const auto row = kernel.row(s, a);
            double sum = 0.0;
            for (std::size_t sn = 0; sn < n; ++sn) {
                const double p = row[sn];
                if (!(p >= 0.0 && p <= 1.0)) return {Kind::entry_out_of_range, s, a, sn, p};
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTolerance) return {Kind::non_stochastic_row, s, a, 0, sum};
            for (std::size_t sn = 0; sn < n; ++sn)
                if (row[sn] != 0.0 && row[sn] < p_min) return {Kind::below_p_min, s, a, sn, row[sn]};
        }
    }
    return {};
}

inline double l1_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw DimensionMismatch(detail::concat("l1_distance on sizes ", p.size(), " and ", q.size()));
    double d = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) d += std::abs(p[k] - q[k]);
    return d;
}

/// max over (s,a) of the L1 distance between corresponding rows.
inline double max_row_distance(const TransitionKernel& a, const TransitionKernel& b) {
    if (a.num_states() != b.num_states()) throw DimensionMismatch("kernels differ in |S|");
    double worst = 0.0;
    for (std::size_t s = 0; s < a.num_states(); ++s)
        for (int act = 0; act < static_cast<int>(kNumActions); ++act)
            worst = std::max(worst, l1_distance(a.row(s, act), b.row(s, act)));
    return worst;
}

// *******************************************************
// Variation budget
// *******************************************************

struct VariationBudget {
    /// per_step[t][i] = B_{t,i} for consecutive pairs (t, t+1), t = 1..T-1.
    std::vector<std::vector<double>> per_step;
    double total = 0.0;

    /// Sum over t of B_{t,i} for one arm.
    double arm_total(std::size_t arm) const {
        double sum = 0.0;
        for (const auto& step : per_step) sum += step.at(arm);
        return sum;
    }

    std::vector<double> arm_totals() const {
        std::vector<double> totals;
        if (per_step.empty()) return totals;
        totals.assign(per_step.front().size(), 0.0);
        for (const auto& step : per_step)
            for (std::size_t i = 0; i < step.size(); ++i) totals[i] += step[i];
        return totals;
    }
};

/**
 * Per-step variation of a schedule indexed [arm][t]. Each arm must carry the
 * same number of kernels, all over the same state space.
 */
inline VariationBudget variation_budget(const std::vector<std::vector<TransitionKernel>>& schedule) {
    VariationBudget budget;
    if (schedule.empty()) return budget;
    const std::size_t horizon = schedule.front().size();
    const std::size_t num_states = horizon > 0 ? schedule.front().front().num_states() : 0;
    for (const auto& arm : schedule) {
        if (arm.size() != horizon) throw DimensionMismatch("arms carry schedules of different lengths");
        for (const auto& k : arm)
            if (k.num_states() != num_states) throw DimensionMismatch("kernels differ in |S|");
    }
    if (horizon < 2) return budget;
    budget.per_step.assign(horizon - 1, std::vector<double>(schedule.size(), 0.0));
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        for (std::size_t t = 0; t + 1 < horizon; ++t) {
            const auto& cur = schedule[i][t];
            const auto& next = schedule[i][t + 1];
            const double d = (cur == next) ? 0.0 : max_row_distance(next, cur);
            budget.per_step[t][i] = d;
        }
    }
    for (const auto& step : budget.per_step)
        for (double b : step) budget.total += b;
    return budget;
}

} // namespace nsw
