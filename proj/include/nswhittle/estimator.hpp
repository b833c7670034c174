#pragma once

// Sliding-window transition statistics and L1 confidence sets for one arm.

#include "core.hpp"

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace nsw {

struct TransitionRecord {
    std::size_t time = 0;
    std::size_t state = 0;
    int action = 0;
    std::size_t next_state = 0;

    bool operator==(const TransitionRecord&) const = default;
};

/**
 * Ring buffer of the last W transitions of one arm, with incremental counts.
 *
 * A record observed at time q influences queries at time t iff
 * t - W <= q <= t - 1, so at most W records are ever in play. Queries must not
 * look into the past: t must exceed the time of the latest record.
 */
class SlidingWindowStats {
public:
    SlidingWindowStats(std::size_t num_states, std::size_t window)
        : num_states_(num_states), window_(window),
          joint_(num_states * kNumActions * num_states, 0), counts_(num_states * kNumActions, 0) {
        if (num_states == 0) throw InvalidConfig("num_states must be positive");
        if (window == 0) throw InvalidConfig("window must be positive");
    }

    std::size_t num_states() const { return num_states_; }
    std::size_t window() const { return window_; }
    const std::deque<TransitionRecord>& history() const { return history_; }

    /// Time of the latest record, 0 when empty.
    std::size_t last_time() const { return history_.empty() ? last_evicted_time_ : history_.back().time; }

    void record(std::size_t t, std::size_t s, int a, std::size_t s_next) {
        if (s >= num_states_ || s_next >= num_states_ || (a != kPassive && a != kActive))
            throw DimensionMismatch(detail::concat("record (", s, ",", a, ",", s_next, ") out of range"));
        if (t == 0 || t <= last_time())
            throw NonMonotoneTime(detail::concat("record at t=", t, " after t=", last_time()));
        history_.push_back({t, s, a, s_next});
        ++counts_[pair_index(s, a)];
        ++joint_[pair_index(s, a) * num_states_ + s_next];
        // Only records with q >= t + 1 - W can matter from now on.
        while (!history_.empty() && history_.front().time + window_ < t + 1) evict_front();
    }

    /// In-window observations of (s,a) at query time t, without the max{.,1} guard.
    std::size_t raw_count(std::size_t t, std::size_t s, int a) const {
        check_query(t);
        if (incremental_valid(t)) return counts_[pair_index(s, a)];
        std::size_t n = 0;
        for (const auto& r : history_)
            if (in_window(r.time, t) && r.state == s && r.action == a) ++n;
        return n;
    }

    std::size_t joint_count(std::size_t t, std::size_t s, int a, std::size_t s_next) const {
        check_query(t);
        if (incremental_valid(t)) return joint_[pair_index(s, a) * num_states_ + s_next];
        std::size_t n = 0;
        for (const auto& r : history_)
            if (in_window(r.time, t) && r.state == s && r.action == a && r.next_state == s_next) ++n;
        return n;
    }

    /// N+ = max{count, 1}, the denominator of the empirical estimate and the radius.
    std::size_t window_count(std::size_t t, std::size_t s, int a) const {
        return std::max<std::size_t>(raw_count(t, s, a), 1);
    }

    /**
     * Windowed empirical row M(s,a,.)/N+(s,a). With no observations the uniform
     * distribution is returned so the centre always lies in the simplex.
     */
    std::vector<double> empirical_transition(std::size_t t, std::size_t s, int a) const {
        const std::size_t n = raw_count(t, s, a);
        std::vector<double> p(num_states_);
        if (n == 0) {
            std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(num_states_));
            return p;
        }
        for (std::size_t sn = 0; sn < num_states_; ++sn)
            p[sn] = static_cast<double>(joint_count(t, s, a, sn)) / static_cast<double>(n);
        return p;
    }

    /// True iff the record observed at time q counts at query time t.
    bool in_window(std::size_t q, std::size_t t) const { return q + window_ >= t && q + 1 <= t; }

private:
    std::size_t pair_index(std::size_t s, int a) const { return s * kNumActions + static_cast<std::size_t>(a); }

    bool incremental_valid(std::size_t t) const { return t == last_time() + 1; }

    void check_query(std::size_t t) const {
        if (t <= last_time())
            throw NonMonotoneTime(detail::concat("query at t=", t, " does not follow latest record t=", last_time()));
    }

    void evict_front() {
        const auto& r = history_.front();
        --counts_[pair_index(r.state, r.action)];
        --joint_[pair_index(r.state, r.action) * num_states_ + r.next_state];
        last_evicted_time_ = r.time;
        history_.pop_front();
    }

    std::size_t num_states_;
    std::size_t window_;
    std::deque<TransitionRecord> history_;
    std::vector<std::size_t> joint_;
    std::vector<std::size_t> counts_;
    std::size_t last_evicted_time_ = 0;
};

/// rad = sqrt(2|S| ln(|S||A|T/delta) / N+).
inline double confidence_radius(std::size_t count, std::size_t num_states, std::size_t num_actions,
                                std::size_t horizon, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidDelta(detail::concat("delta must lie in (0,1), got ", delta));
    if (count == 0) throw InvalidConfig("confidence_radius needs N+ >= 1");
    const double s = static_cast<double>(num_states);
    const double log_term =
        std::log(s * static_cast<double>(num_actions) * static_cast<double>(horizon) / delta);
    return std::sqrt(2.0 * s * log_term / static_cast<double>(count));
}

/// L1 ball {P in simplex : |P - center|_1 <= radius + exploration}.
struct ConfidenceSet {
    std::vector<double> center;
    double radius = 0.0;
    double exploration = 0.0;

    double total_radius() const { return radius + exploration; }

    /// Degenerate set {p}.
    static ConfidenceSet point_mass(std::span<const double> p) { return {{p.begin(), p.end()}, 0.0, 0.0}; }
};

/// Slack on membership so that boundary points produced in floating point still count as inside.
inline constexpr double kMembershipSlack = 1e-12;

inline bool contains(const ConfidenceSet& set, std::span<const double> p) {
    return l1_distance(p, set.center) <= set.total_radius() + kMembershipSlack;
}

inline ConfidenceSet build_confidence_set(const SlidingWindowStats& stats, std::size_t t, std::size_t s, int a,
                                          double exploration, const RmabConfig& config) {
    if (exploration < 0.0) throw InvalidRadius("exploration bonus must be nonnegative");
    ConfidenceSet set;
    set.center = stats.empirical_transition(t, s, a);
    set.radius = confidence_radius(stats.window_count(t, s, a), config.num_states, kNumActions, config.horizon,
                                   config.failure_prob);
    set.exploration = exploration;
    return set;
}

/// Sets for every (s,a) of one arm, indexed s*2 + a.
inline std::vector<ConfidenceSet> build_arm_sets(const SlidingWindowStats& stats, std::size_t t, double exploration,
                                                 const RmabConfig& config) {
    std::vector<ConfidenceSet> sets;
    sets.reserve(config.num_states * kNumActions);
    for (std::size_t s = 0; s < config.num_states; ++s)
        for (int a = 0; a < static_cast<int>(kNumActions); ++a)
            sets.push_back(build_confidence_set(stats, t, s, a, exploration, config));
    return sets;
}

/// Point-mass sets at a known kernel.
inline std::vector<ConfidenceSet> point_mass_sets(const TransitionKernel& kernel) {
    std::vector<ConfidenceSet> sets;
    sets.reserve(kernel.num_states() * kNumActions);
    for (std::size_t s = 0; s < kernel.num_states(); ++s)
        for (int a = 0; a < static_cast<int>(kNumActions); ++a) sets.push_back(ConfidenceSet::point_mass(kernel.row(s, a)));
    return sets;
}

} // namespace nsw
