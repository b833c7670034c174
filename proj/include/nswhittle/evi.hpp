#pragma once

// Extended value iteration: discounted Bellman sweeps in which each transition
// row is chosen optimistically from its L1 confidence set.

#include "core.hpp"
#include "estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace nsw {

/// Action values Q(s,a) of one arm, stored [s][a].
struct QTable {
    std::size_t num_states = 0;
    std::vector<double> values;
    /// Sweeps performed to produce this table.
    std::size_t iterations = 0;

    QTable() = default;
    explicit QTable(std::size_t n) : num_states(n), values(n * kNumActions, 0.0) {}

    double operator()(std::size_t s, int a) const { return values[s * kNumActions + static_cast<std::size_t>(a)]; }
    double& operator()(std::size_t s, int a) { return values[s * kNumActions + static_cast<std::size_t>(a)]; }

    /// max_a Q(s,a).
    double state_value(std::size_t s) const { return std::max((*this)(s, kPassive), (*this)(s, kActive)); }

    std::vector<double> state_values() const {
        std::vector<double> v(num_states);
        for (std::size_t s = 0; s < num_states; ++s) v[s] = state_value(s);
        return v;
    }
};

namespace detail {

/// States by value descending, lower index first among ties.
inline void value_order(std::span<const double> values, std::vector<std::size_t>& order) {
    order.resize(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] > values[b] || (values[a] == values[b] && a < b);
    });
}

/**
 * Moves up to radius/2 of mass onto the best state, taking it from the
 * worst-valued states first (never from states tied with the best). Calls
 * `take(state, amount)` per donor and returns the mass moved.
 */
template <class Take>
double shift_mass(std::span<const double> center, double radius, std::span<const double> values,
                  std::span<const std::size_t> order, Take&& take) {
    const std::size_t best = order.front();
    const double wanted = std::min(radius / 2.0, 1.0 - center[best]);
    double remaining = wanted;
    for (std::size_t k = order.size(); k-- > 1 && remaining > 0.0;) {
        const std::size_t s = order[k];
        if (!(values[s] < values[best])) break;
        // A donor within rounding of the remaining mass is drained completely.
        const double amount = remaining >= center[s] - 1e-15 ? center[s] : remaining;
        if (amount > 0.0) {
            take(s, amount);
            remaining -= amount;
        }
    }
    return wanted - remaining;
}

inline double optimistic_expectation(std::span<const double> center, double radius, std::span<const double> values,
                                     std::span<const std::size_t> order) {
    double total = 0.0;
    for (std::size_t s = 0; s < center.size(); ++s) total += center[s] * values[s];
    if (radius <= 0.0) return total;
    const double moved =
        shift_mass(center, radius, values, order, [&](std::size_t s, double amount) { total -= amount * values[s]; });
    return total + moved * values[order.front()];
}

} // namespace detail

/**
 * argmax of sum_s P(s) values(s) over {P in simplex : |P - center|_1 <= radius}.
 *
 * Greedy: raise the best state by min(radius/2, 1 - center(best)) and drain the
 * same mass from the lowest-valued states upward. Ties favour the lower index.
 * A flat value vector returns the centre.
 */
inline std::vector<double> inner_maximize(std::span<const double> center, double total_radius,
                                          std::span<const double> values) {
    if (!(total_radius >= 0.0)) throw InvalidRadius(detail::concat("radius must be >= 0, got ", total_radius));
    if (center.size() != values.size() || center.empty())
        throw DimensionMismatch("inner_maximize needs equally sized, nonempty center and values");
    std::vector<double> p(center.begin(), center.end());
    if (total_radius == 0.0) return p;
    std::vector<std::size_t> order;
    detail::value_order(values, order);
    const double moved =
        detail::shift_mass(center, total_radius, values, order, [&](std::size_t s, double amount) { p[s] -= amount; });
    p[order.front()] = std::min(1.0, p[order.front()] + moved);
    return p;
}

struct EviStop {
    std::size_t max_iters = 1000;
    /// Stop once the sup-norm change of a sweep is at most this.
    double tol = 1e-7;
    /// Keep per-sweep sup-norm changes in EviResult::changes.
    bool trace = false;

    /// tol = 1e-6 (1 - gamma), cap 10 ceil(ln(1/tol) / (1 - gamma)).
    static EviStop defaults(double discount) {
        EviStop stop;
        stop.tol = 1e-6 * (1.0 - discount);
        stop.max_iters = 10 * static_cast<std::size_t>(std::ceil(std::log(1.0 / stop.tol) / (1.0 - discount)));
        return stop;
    }
};

struct EviResult {
    QTable q;
    /// Maximising row per (s,a) against the final state values.
    TransitionKernel optimistic;
    std::size_t sweeps = 0;
    double last_change = 0.0;
    bool converged = false;
    std::vector<double> changes;
};

namespace detail {

inline void check_evi_inputs(const QTable& q, std::span<const ConfidenceSet> sets, const RewardTable& rewards,
                             double discount) {
    if (!(discount >= 0.0 && discount < 1.0))
        throw NonConvergence(detail::concat("EVI needs discount in [0,1), got ", discount));
    const std::size_t n = q.num_states;
    if (sets.size() != n * kNumActions || rewards.num_states() != n)
        throw DimensionMismatch("EVI inputs disagree on |S|");
    for (const auto& set : sets)
        if (set.center.size() != n) throw DimensionMismatch("confidence set centre has wrong length");
}

/// One synchronous sweep from `current` into `next` using precomputed scratch.
inline double sweep_into(const QTable& current, QTable& next, std::span<const ConfidenceSet> sets,
                         const RewardTable& rewards, double lambda, double discount, std::vector<double>& state_values,
                         std::vector<std::size_t>& order) {
    const std::size_t n = current.num_states;
    state_values.resize(n);
    for (std::size_t s = 0; s < n; ++s) state_values[s] = current.state_value(s);
    value_order(state_values, order);
    double change = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        for (int a = 0; a < static_cast<int>(kNumActions); ++a) {
            const auto& set = sets[s * kNumActions + static_cast<std::size_t>(a)];
            const double expected = optimistic_expectation(set.center, set.total_radius(), state_values, order);
            const double value = -lambda * a + rewards(s, a) + discount * expected;
            change = std::max(change, std::abs(value - current(s, a)));
            next(s, a) = value;
        }
    }
    next.iterations = current.iterations + 1;
    return change;
}

} // namespace detail

/// Q'(s,a) = -lambda a + R(s,a) + gamma max_{P in H(s,a)} sum_s' P(s') max_a' Q(s',a').
inline QTable evi_sweep(const QTable& q, std::span<const ConfidenceSet> sets, const RewardTable& rewards,
                        double lambda, double discount) {
    detail::check_evi_inputs(q, sets, rewards, discount);
    QTable next(q.num_states);
    std::vector<double> scratch;
    std::vector<std::size_t> order;
    detail::sweep_into(q, next, sets, rewards, lambda, discount, scratch, order);
    return next;
}

/// Optimistic row per (s,a) against the state values of `q`.
inline TransitionKernel optimistic_kernel(const QTable& q, std::span<const ConfidenceSet> sets) {
    const std::size_t n = q.num_states;
    const auto values = q.state_values();
    std::vector<double> flat;
    flat.reserve(n * kNumActions * n);
    for (const auto& set : sets) {
        const auto row = inner_maximize(set.center, set.total_radius(), values);
        flat.insert(flat.end(), row.begin(), row.end());
    }
    return TransitionKernel(n, std::move(flat));
}

namespace detail {

inline EviResult iterate(const QTable& q0, std::span<const ConfidenceSet> sets, const RewardTable& rewards,
                         double lambda, double discount, const EviStop& stop) {
    check_evi_inputs(q0, sets, rewards, discount);
    if (stop.max_iters == 0 && !(stop.tol > 0.0)) throw InvalidConfig("EVI needs max_iters >= 1 or tol > 0");
    EviResult result;
    QTable current = q0;
    QTable next(q0.num_states);
    std::vector<double> scratch;
    std::vector<std::size_t> order;
    const std::size_t cap = stop.max_iters == 0 ? static_cast<std::size_t>(-1) : stop.max_iters;
    while (result.sweeps < cap) {
        const double change = sweep_into(current, next, sets, rewards, lambda, discount, scratch, order);
        std::swap(current, next);
        ++result.sweeps;
        result.last_change = change;
        if (stop.trace) result.changes.push_back(change);
        if (change <= stop.tol) {
            result.converged = true;
            break;
        }
    }
    result.q = std::move(current);
    return result;
}

} // namespace detail

/// Converged Q table only; skips the optimistic-kernel extraction.
inline QTable evi_values(const QTable& q0, std::span<const ConfidenceSet> sets, const RewardTable& rewards,
                         double lambda, double discount, const EviStop& stop) {
    return detail::iterate(q0, sets, rewards, lambda, discount, stop).q;
}

/**
 * Sweeps from q0 until the sup-norm change is at most stop.tol or
 * stop.max_iters sweeps were made, then extracts the optimistic kernel once.
 */
inline EviResult run_evi(const QTable& q0, std::span<const ConfidenceSet> sets, const RewardTable& rewards,
                         double lambda, double discount, const EviStop& stop) {
    auto result = detail::iterate(q0, sets, rewards, lambda, discount, stop);
    result.optimistic = optimistic_kernel(result.q, sets);
    return result;
}

} // namespace nsw
