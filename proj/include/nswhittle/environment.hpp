#pragma once

// Non-stationary environment generation and stepping.

#include "core.hpp"
#include "random.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nsw {

enum class EnvMode { stationary, abrupt, drift };

inline std::string_view to_string(EnvMode mode) {
    switch (mode) {
    case EnvMode::stationary: return "stationary";
    case EnvMode::abrupt: return "abrupt";
    case EnvMode::drift: return "drift";
    }
    return "stationary";
}

inline EnvMode parse_env_mode(std::string_view name) {
    if (name == "stationary") return EnvMode::stationary;
    if (name == "abrupt") return EnvMode::abrupt;
    if (name == "drift") return EnvMode::drift;
    throw InvalidConfig(detail::concat("unknown environment mode '", name, "'"));
}

/**
 * Time-indexed kernels for every arm plus the (stationary) rewards.
 *
 * Time is 1-based: kernel(i, t) governs the transition from t to t+1.
 */
class EnvironmentSchedule {
public:
    EnvironmentSchedule() = default;

    EnvironmentSchedule(RmabConfig config, EnvMode mode, std::uint64_t seed, double target_budget,
                        std::vector<std::vector<TransitionKernel>> kernels, std::vector<RewardTable> rewards)
        : config_(std::move(config)), mode_(mode), seed_(seed), target_budget_(target_budget),
          kernels_(std::move(kernels)), rewards_(std::move(rewards)) {
        if (kernels_.size() != config_.num_arms || rewards_.size() != config_.num_arms)
            throw DimensionMismatch("schedule arm count differs from num_arms");
        for (const auto& arm : kernels_) {
            if (arm.size() != config_.horizon) throw DimensionMismatch("schedule length differs from horizon");
            for (const auto& k : arm)
                if (k.num_states() != config_.num_states) throw DimensionMismatch("kernel |S| differs from config");
        }
        for (const auto& r : rewards_)
            if (r.num_states() != config_.num_states) throw DimensionMismatch("reward |S| differs from config");
        budget_ = variation_budget(kernels_);
        segments_.assign(config_.horizon, 0);
        for (std::size_t t = 1; t < config_.horizon; ++t) {
            bool changed = false;
            for (const auto& arm : kernels_) changed = changed || !(arm[t] == arm[t - 1]);
            segments_[t] = segments_[t - 1] + (changed ? 1 : 0);
        }
    }

    const RmabConfig& config() const { return config_; }
    EnvMode mode() const { return mode_; }
    std::uint64_t seed() const { return seed_; }
    double target_budget() const { return target_budget_; }
    std::size_t num_arms() const { return config_.num_arms; }
    std::size_t num_states() const { return config_.num_states; }
    std::size_t horizon() const { return config_.horizon; }

    const TransitionKernel& kernel(std::size_t arm, std::size_t t) const { return kernels_.at(arm).at(t - 1); }
    const RewardTable& rewards(std::size_t arm) const { return rewards_.at(arm); }
    const std::vector<std::vector<TransitionKernel>>& kernels() const { return kernels_; }
    const std::vector<RewardTable>& reward_tables() const { return rewards_; }
    const VariationBudget& budget() const { return budget_; }

    /// Increments exactly when some arm's kernel differs from the previous step.
    std::size_t segment(std::size_t t) const { return segments_.at(t - 1); }

    bool operator==(const EnvironmentSchedule& other) const {
        return mode_ == other.mode_ && seed_ == other.seed_ && kernels_ == other.kernels_ &&
               rewards_ == other.rewards_;
    }

private:
    RmabConfig config_;
    EnvMode mode_ = EnvMode::stationary;
    std::uint64_t seed_ = 0;
    double target_budget_ = 0.0;
    std::vector<std::vector<TransitionKernel>> kernels_;
    std::vector<RewardTable> rewards_;
    VariationBudget budget_;
    std::vector<std::size_t> segments_;
};

struct GeneratorOptions {
    /// Change points per arm in abrupt mode.
    std::size_t jumps_per_arm = 2;
    /// Anchor redraws when looking for an anchor far enough to spend a jump budget.
    std::size_t anchor_attempts = 64;
};

namespace detail {

/// Relative shave keeping floating-point budgets at or under their target.
inline constexpr double kBudgetShave = 1e-12;

inline std::vector<double> random_anchor(std::size_t num_states, double p_min, RandomStream& rng) {
    const double free_mass = std::max(0.0, 1.0 - static_cast<double>(num_states) * p_min);
    std::vector<double> flat;
    flat.reserve(num_states * kNumActions * num_states);
    for (std::size_t row = 0; row < num_states * kNumActions; ++row) {
        auto w = rng.dirichlet_ones(num_states);
        double sum = 0.0;
        for (auto& v : w) {
            v = p_min + free_mass * v;
            sum += v;
        }
        for (auto& v : w) flat.push_back(v / sum);
    }
    return flat;
}

/// (1-theta)*from + theta*to, rows renormalised.
inline TransitionKernel interpolate(std::size_t num_states, const std::vector<double>& from,
                                    const std::vector<double>& to, double theta) {
    std::vector<double> flat(from.size());
    for (std::size_t k = 0; k < from.size(); ++k) flat[k] = from[k] + theta * (to[k] - from[k]);
    for (std::size_t row = 0; row < num_states * kNumActions; ++row) {
        double sum = 0.0;
        for (std::size_t sn = 0; sn < num_states; ++sn) sum += flat[row * num_states + sn];
        for (std::size_t sn = 0; sn < num_states; ++sn) flat[row * num_states + sn] /= sum;
    }
    return TransitionKernel(num_states, std::move(flat));
}

inline double flat_distance(std::size_t num_states, const std::vector<double>& a, const std::vector<double>& b) {
    return max_row_distance(TransitionKernel(num_states, a), TransitionKernel(num_states, b));
}

/// Draws anchors until one lies at least `wanted` away from `from`; else the farthest seen.
inline std::vector<double> far_anchor(std::size_t num_states, double p_min, const std::vector<double>& from,
                                      double wanted, std::size_t attempts, RandomStream& rng) {
    std::vector<double> best;
    double best_distance = -1.0;
    for (std::size_t k = 0; k < std::max<std::size_t>(attempts, 1); ++k) {
        auto candidate = random_anchor(num_states, p_min, rng);
        const double d = flat_distance(num_states, from, candidate);
        if (d > best_distance) {
            best_distance = d;
            best = std::move(candidate);
        }
        if (best_distance >= wanted) break;
    }
    return best;
}

inline std::vector<TransitionKernel> drift_arm(const RmabConfig& config, double arm_budget,
                                               const GeneratorOptions& options, RandomStream& rng) {
    const std::size_t n = config.num_states;
    const std::size_t horizon = config.horizon;
    auto start = random_anchor(n, config.p_min_floor, rng);
    if (arm_budget <= 0.0) return std::vector<TransitionKernel>(horizon, TransitionKernel(n, start));

    auto end = far_anchor(n, config.p_min_floor, start, arm_budget, options.anchor_attempts, rng);
    const double span = flat_distance(n, start, end);
    if (span <= 0.0) throw InfeasibleBudget("drift anchors coincide; cannot spend a positive budget");

    // Ping-pong between the anchors in `legs` legs that each travel a fraction
    // `reach` of the anchor distance; turning points fall on integer steps so
    // every step's max-row distance is exactly reach*span/leg_steps.
    const auto legs = static_cast<std::size_t>(std::ceil(arm_budget / span));
    const std::size_t steps = horizon - 1;
    if (steps < legs)
        throw InfeasibleBudget(detail::concat("horizon ", horizon, " too short to drift by ", arm_budget));
    const double reach = arm_budget / (static_cast<double>(legs) * span) * (1.0 - kBudgetShave);

    std::vector<TransitionKernel> out;
    out.reserve(horizon);
    out.push_back(interpolate(n, start, end, 0.0));
    for (std::size_t leg = 0; leg < legs; ++leg) {
        const std::size_t leg_steps = steps / legs + (leg < steps % legs ? 1 : 0);
        for (std::size_t k = 1; k <= leg_steps; ++k) {
            const double frac = static_cast<double>(k) / static_cast<double>(leg_steps);
            const double theta = (leg % 2 == 0) ? reach * frac : reach * (1.0 - frac);
            out.push_back(interpolate(n, start, end, theta));
        }
    }
    return out;
}

inline std::vector<TransitionKernel> abrupt_arm(const RmabConfig& config, double arm_budget,
                                                const GeneratorOptions& options, RandomStream& rng) {
    const std::size_t n = config.num_states;
    const std::size_t horizon = config.horizon;
    auto current = random_anchor(n, config.p_min_floor, rng);
    std::vector<TransitionKernel> out(horizon, TransitionKernel(n, current));
    const std::size_t jumps = std::min(options.jumps_per_arm, horizon - 1);
    if (arm_budget <= 0.0 || jumps == 0) return out;

    // Change times: distinct t in [2, T], the kernel switching between t-1 and t.
    std::vector<std::size_t> candidates(horizon - 1);
    for (std::size_t k = 0; k < candidates.size(); ++k) candidates[k] = k + 2;
    for (std::size_t k = 0; k < jumps; ++k) {
        const std::size_t pick = k + rng.below(candidates.size() - k);
        std::swap(candidates[k], candidates[pick]);
    }
    std::vector<std::size_t> change_times(candidates.begin(), candidates.begin() + static_cast<long>(jumps));
    std::sort(change_times.begin(), change_times.end());

    const double jump_budget = arm_budget / static_cast<double>(jumps);
    std::size_t next_change = 0;
    for (std::size_t t = 2; t <= horizon; ++t) {
        if (next_change < change_times.size() && change_times[next_change] == t) {
            auto anchor = far_anchor(n, config.p_min_floor, current, jump_budget, options.anchor_attempts, rng);
            const double distance = flat_distance(n, current, anchor);
            const double fraction =
                distance > 0.0 ? std::min(1.0, jump_budget / distance * (1.0 - kBudgetShave)) : 0.0;
            const TransitionKernel moved = interpolate(n, current, anchor, fraction);
            current.assign(moved.data().begin(), moved.data().end());
            ++next_change;
        }
        out[t - 1] = TransitionKernel(n, current);
    }
    return out;
}

} // namespace detail

/**
 * Generates per-arm kernels whose realised variation never exceeds target_budget.
 *
 * Anchor kernels are uniform on the simplex mixed with the p_min floor, so every
 * entry is at least p_min. The budget is split evenly across arms. Drift mode
 * spends it exactly by linear interpolation between two anchors; abrupt mode
 * spends at most it through `jumps_per_arm` change points per arm. Rewards are
 * drawn uniformly from [0,1] per (s,a). Deterministic in `seed`.
 */
inline EnvironmentSchedule generate_environment(const RmabConfig& config, double target_budget, EnvMode mode,
                                                std::uint64_t seed, const GeneratorOptions& options = {}) {
    config.validate();
    if (!(target_budget >= 0.0) || !std::isfinite(target_budget))
        throw InvalidConfig(detail::concat("target budget must be finite and >= 0, got ", target_budget));
    if (mode == EnvMode::stationary && target_budget > 0.0)
        throw InfeasibleBudget("a stationary environment cannot spend a positive variation budget");
    if (config.p_min_floor * static_cast<double>(config.num_states) > 1.0 + 1e-15)
        throw PMinInfeasible(detail::concat("p_min_floor ", config.p_min_floor, " exceeds 1/|S| = ",
                                            1.0 / static_cast<double>(config.num_states)));

    const double arm_budget = target_budget / static_cast<double>(config.num_arms);
    std::vector<std::vector<TransitionKernel>> kernels;
    std::vector<RewardTable> rewards;
    for (std::size_t i = 0; i < config.num_arms; ++i) {
        RandomStream kernel_rng(derive_seed(seed, "kernel", i));
        switch (mode) {
        case EnvMode::stationary:
        case EnvMode::drift: kernels.push_back(detail::drift_arm(config, arm_budget, options, kernel_rng)); break;
        case EnvMode::abrupt: kernels.push_back(detail::abrupt_arm(config, arm_budget, options, kernel_rng)); break;
        }
        RandomStream reward_rng(derive_seed(seed, "reward", i));
        std::vector<double> r(config.num_states * kNumActions);
        for (auto& v : r) v = reward_rng.uniform();
        rewards.emplace_back(config.num_states, std::move(r));
    }
    return EnvironmentSchedule(config, mode, seed, target_budget, std::move(kernels), std::move(rewards));
}

/// Exact re-measurement of the schedule's variation.
inline VariationBudget realized_variation(const EnvironmentSchedule& env) { return variation_budget(env.kernels()); }

// *******************************************************
// Stepping
// *******************************************************

struct JointState {
    std::vector<std::size_t> states;
    /// 1-based; T+1 once the horizon has been consumed.
    std::size_t time = 1;
};

struct StepOutcome {
    JointState next_state;
    std::vector<double> per_arm_rewards;
    double total_reward = 0.0;
};

/// Uniformly random initial states at t = 1.
inline JointState initial_state(const EnvironmentSchedule& env, RandomStream& rng) {
    JointState state;
    state.states.resize(env.num_arms());
    for (auto& s : state.states) s = rng.below(env.num_states());
    return state;
}

/// One independent draw per arm from kernel(i, t) at (s_i, a_i); arm i uses streams[i].
inline StepOutcome step(const EnvironmentSchedule& env, const JointState& state, std::span<const std::uint8_t> actions,
                        std::span<RandomStream> streams) {
    if (state.time < 1 || state.time > env.horizon())
        throw HorizonExceeded(detail::concat("step at t=", state.time, " outside [1, ", env.horizon(), "]"));
    if (actions.size() != env.num_arms() || state.states.size() != env.num_arms() ||
        streams.size() != env.num_arms())
        throw DimensionMismatch("step expects one state, action, and stream per arm");
    StepOutcome out;
    out.next_state.time = state.time + 1;
    out.next_state.states.resize(env.num_arms());
    out.per_arm_rewards.resize(env.num_arms());
    for (std::size_t i = 0; i < env.num_arms(); ++i) {
        const std::size_t s = state.states[i];
        const int a = actions[i] ? kActive : kPassive;
        out.per_arm_rewards[i] = env.rewards(i)(s, a);
        out.total_reward += out.per_arm_rewards[i];
        out.next_state.states[i] = streams[i].categorical(env.kernel(i, state.time).row(s, a));
    }
    return out;
}

} // namespace nsw
