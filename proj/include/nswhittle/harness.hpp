#pragma once

// Experiment orchestration: configuration, parameter tuning, the learner and
// baseline loops with per-step regret and audits, and result emission.

#include "core.hpp"
#include "dual_policy.hpp"
#include "environment.hpp"
#include "estimator.hpp"
#include "evi.hpp"
#include "oracle.hpp"
#include "random.hpp"
#include "serialization.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace nsw {

enum class PolicyKind { ns_whittle, oracle, random, stationary_whittle };

inline std::string_view to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::ns_whittle: return "ns_whittle";
    case PolicyKind::oracle: return "oracle";
    case PolicyKind::random: return "random";
    case PolicyKind::stationary_whittle: return "stationary_whittle";
    }
    return "unknown";
}

inline PolicyKind parse_policy(std::string_view name) {
    if (name == "ns_whittle") return PolicyKind::ns_whittle;
    if (name == "oracle") return PolicyKind::oracle;
    if (name == "random") return PolicyKind::random;
    if (name == "stationary_whittle") return PolicyKind::stationary_whittle;
    throw InvalidConfig(detail::concat("unknown policy '", name, "'"));
}

struct ExperimentConfig {
    RmabConfig rmab;
    double target_budget = 0.0;
    EnvMode env_mode = EnvMode::stationary;
    GeneratorOptions generator;
    /// Empty means "auto": tuned from the variation budget. One entry applies to every arm.
    std::vector<std::size_t> windows;
    std::vector<double> explorations;
    EviStop evi;
    /// kappa; 0 selects 1e-4 (1 + lambda_cap).
    double dual_tolerance = 0.0;
    PolicyKind policy = PolicyKind::ns_whittle;
    std::size_t replications = 1;
    std::uint64_t seed = 1;
    std::string output = "out";
    bool audit = false;
    std::size_t solve_every = 1;
    std::size_t threads = 1;
    /// Debug: confidence sets replaced by point masses at the true kernels.
    bool collapse_sets = false;
    /// Fixed schedule shared by all replications instead of generating one.
    std::string env_file;

    double kappa() const {
        return dual_tolerance > 0.0 ? dual_tolerance : DualState::default_tolerance(rmab.lambda_cap);
    }

    void validate() const {
        rmab.validate();
        if (!(target_budget >= 0.0) || !std::isfinite(target_budget))
            throw InvalidConfig("target_budget must be finite and >= 0");
        if (replications == 0) throw InvalidConfig("replications must be positive");
        if (solve_every == 0) throw InvalidConfig("solve_every must be positive");
        if (threads == 0) throw InvalidConfig("threads must be positive");
        if (!windows.empty() && windows.size() != 1 && windows.size() != rmab.num_arms)
            throw InvalidConfig("window needs one value or one per arm");
        for (auto w : windows)
            if (w == 0) throw InvalidConfig("window must be positive");
        if (!explorations.empty() && explorations.size() != 1 && explorations.size() != rmab.num_arms)
            throw InvalidConfig("exploration needs one value or one per arm");
        for (auto e : explorations)
            if (!(e >= 0.0)) throw InvalidConfig("exploration must be >= 0");
        if (evi.max_iters == 0 && !(evi.tol > 0.0)) throw InvalidConfig("EVI needs max_iters >= 1 or tol > 0");
    }
};

/// Fills in the defaults that depend on other fields (EVI stop, lambda cap).
inline ExperimentConfig make_experiment_config(const RmabConfig& rmab) {
    ExperimentConfig config;
    config.rmab = rmab;
    config.evi = EviStop::defaults(rmab.discount);
    return config;
}

namespace detail {

template <class T>
std::vector<T> scalar_or_list(const Json& node, std::string_view key) {
    if (node.is_array()) return node.get<std::vector<T>>();
    if (node.is_number()) return {node.get<T>()};
    throw InvalidConfig(concat("'", key, "' must be a number, a list, or \"auto\""));
}

} // namespace detail

/// Parses the snake_case JSON experiment description; unknown keys are rejected.
inline ExperimentConfig parse_experiment_config(const Json& doc) {
    if (!doc.is_object()) throw InvalidConfig("config must be a JSON object");
    static const std::vector<std::string> known = {
        "num_arms",      "num_states",  "budget",      "discount",      "horizon",       "failure_prob",
        "lambda_cap",    "p_min_floor", "target_budget", "env_mode",    "jumps_per_arm", "anchor_attempts",
        "window",        "exploration", "evi_max_iters", "evi_tol",     "dual_tolerance", "policy",
        "replications",  "seed",        "output",      "audit",         "solve_every",   "threads",
        "collapse_sets", "env_file"};
    for (const auto& [key, value] : doc.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw InvalidConfig(detail::concat("unknown config key '", key, "'"));
    try {
        RmabConfig rmab;
        rmab.num_arms = doc.value("num_arms", rmab.num_arms);
        rmab.num_states = doc.value("num_states", rmab.num_states);
        rmab.budget = doc.value("budget", rmab.budget);
        rmab.discount = doc.value("discount", rmab.discount);
        rmab.horizon = doc.value("horizon", rmab.horizon);
        rmab.failure_prob = doc.value("failure_prob", rmab.failure_prob);
        rmab.lambda_cap = doc.value("lambda_cap", RmabConfig::default_lambda_cap(rmab.discount));
        rmab.p_min_floor = doc.value("p_min_floor", rmab.p_min_floor);
        rmab.validate();

        auto config = make_experiment_config(rmab);
        config.target_budget = doc.value("target_budget", 0.0);
        config.env_mode = parse_env_mode(doc.value("env_mode", std::string("stationary")));
        config.generator.jumps_per_arm = doc.value("jumps_per_arm", config.generator.jumps_per_arm);
        config.generator.anchor_attempts = doc.value("anchor_attempts", config.generator.anchor_attempts);
        if (doc.contains("window") && !(doc["window"].is_string() && doc["window"] == "auto"))
            config.windows = detail::scalar_or_list<std::size_t>(doc["window"], "window");
        if (doc.contains("exploration") && !(doc["exploration"].is_string() && doc["exploration"] == "auto"))
            config.explorations = detail::scalar_or_list<double>(doc["exploration"], "exploration");
        config.evi.max_iters = doc.value("evi_max_iters", config.evi.max_iters);
        config.evi.tol = doc.value("evi_tol", config.evi.tol);
        config.dual_tolerance = doc.value("dual_tolerance", 0.0);
        config.policy = parse_policy(doc.value("policy", std::string("ns_whittle")));
        config.replications = doc.value("replications", config.replications);
        config.seed = doc.value("seed", config.seed);
        config.output = doc.value("output", config.output);
        config.audit = doc.value("audit", false);
        config.solve_every = doc.value("solve_every", config.solve_every);
        config.threads = doc.value("threads", config.threads);
        config.collapse_sets = doc.value("collapse_sets", false);
        config.env_file = doc.value("env_file", std::string());
        config.validate();
        return config;
    } catch (const Json::exception& e) {
        throw InvalidConfig(detail::concat("bad config value: ", e.what()));
    }
}

inline Json experiment_config_to_json(const ExperimentConfig& c) {
    Json doc = {{"num_arms", c.rmab.num_arms},
                {"num_states", c.rmab.num_states},
                {"budget", c.rmab.budget},
                {"discount", c.rmab.discount},
                {"horizon", c.rmab.horizon},
                {"failure_prob", c.rmab.failure_prob},
                {"lambda_cap", c.rmab.lambda_cap},
                {"p_min_floor", c.rmab.p_min_floor},
                {"target_budget", c.target_budget},
                {"env_mode", std::string(to_string(c.env_mode))},
                {"jumps_per_arm", c.generator.jumps_per_arm},
                {"anchor_attempts", c.generator.anchor_attempts},
                {"evi_max_iters", c.evi.max_iters},
                {"evi_tol", c.evi.tol},
                {"dual_tolerance", c.kappa()},
                {"policy", std::string(to_string(c.policy))},
                {"replications", c.replications},
                {"seed", c.seed},
                {"output", c.output},
                {"audit", c.audit},
                {"solve_every", c.solve_every},
                {"threads", c.threads},
                {"collapse_sets", c.collapse_sets},
                {"env_file", c.env_file}};
    doc["window"] = c.windows.empty() ? Json("auto") : Json(c.windows);
    doc["exploration"] = c.explorations.empty() ? Json("auto") : Json(c.explorations);
    return doc;
}

// *******************************************************
// Tuning
// *******************************************************

struct TunedParameters {
    std::vector<std::size_t> windows;
    std::vector<double> explorations;
};

/// Floor on a per-arm budget in the window formula.
inline constexpr double kBudgetFloor = 1e-12;

/**
 * W_i = round(|S| sqrt(T) / sqrt(B_i)) clamped to [1, T] and eta_i = sqrt(B W_i / T),
 * with B_i the arm's own variation and B the total. B = 0 gives (T, 1/T).
 */
inline TunedParameters tune_parameters(std::size_t num_states, std::size_t horizon,
                                       std::span<const double> arm_budgets, double total_budget) {
    TunedParameters out;
    const double t = static_cast<double>(horizon);
    for (double b : arm_budgets) {
        if (total_budget <= 0.0) {
            out.windows.push_back(horizon);
            out.explorations.push_back(1.0 / t);
            continue;
        }
        const double raw = static_cast<double>(num_states) * std::sqrt(t) / std::sqrt(std::max(b, kBudgetFloor));
        const double clamped = std::clamp(std::round(raw), 1.0, t);
        const auto w = static_cast<std::size_t>(clamped);
        out.windows.push_back(w);
        out.explorations.push_back(std::sqrt(total_budget * static_cast<double>(w) / t));
    }
    return out;
}

/// Window and exploration per arm for one run; "auto" entries use the even split of the target budget.
inline TunedParameters resolve_parameters(const ExperimentConfig& config) {
    const std::size_t n = config.rmab.num_arms;
    TunedParameters out;
    if (config.policy == PolicyKind::stationary_whittle) {
        out.windows.assign(n, config.rmab.horizon);
        out.explorations.assign(n, 1.0 / static_cast<double>(config.rmab.horizon));
        return out;
    }
    const std::vector<double> arm_budgets(n, config.target_budget / static_cast<double>(n));
    const auto tuned = tune_parameters(config.rmab.num_states, config.rmab.horizon, arm_budgets, config.target_budget);
    out.windows = config.windows.empty() ? tuned.windows
                  : config.windows.size() == 1 ? std::vector<std::size_t>(n, config.windows.front())
                                               : config.windows;
    out.explorations = config.explorations.empty() ? tuned.explorations
                       : config.explorations.size() == 1 ? std::vector<double>(n, config.explorations.front())
                                                         : config.explorations;
    return out;
}

// *******************************************************
// Running
// *******************************************************

struct ReplicationResult {
    std::size_t replication = 0;
    std::vector<RegretRecord> records;
    BadEventAudit bad_events;
    OptimismSummary optimism;
    ValueBoundAudit value_bound;
    /// Good event held at every step for every arm.
    bool good_event = true;
    std::size_t good_steps = 0;
    double realized_budget = 0.0;
    std::vector<std::size_t> windows;
    std::vector<double> explorations;
    std::size_t oracle_solves = 0;
    double seconds = 0.0;
};

struct RunArtifacts {
    ExperimentConfig config;
    std::vector<ReplicationResult> replications;
    double wall_seconds = 0.0;
};

/// Schedule for one replication: the fixed file if given, else generated from a per-replication seed.
inline EnvironmentSchedule replication_environment(const ExperimentConfig& config, std::size_t replication,
                                                   const EnvironmentSchedule* fixed = nullptr) {
    if (fixed) return *fixed;
    return generate_environment(config.rmab, config.target_budget, config.env_mode,
                                derive_seed(config.seed, "env", replication), config.generator);
}

namespace detail {

struct OracleCache {
    std::size_t segment = static_cast<std::size_t>(-1);
    std::map<std::vector<std::size_t>, OracleSolution> solutions;
    std::size_t solves = 0;

    const OracleSolution& get(const EnvironmentSchedule& env, std::size_t t, std::span<const ArmModel> arms,
                              std::span<const std::size_t> states, const ExperimentConfig& config) {
        if (env.segment(t) != segment) {
            segment = env.segment(t);
            solutions.clear();
        }
        std::vector<std::size_t> key(states.begin(), states.end());
        auto it = solutions.find(key);
        if (it == solutions.end()) {
            ++solves;
            it = solutions.emplace(std::move(key), solve_oracle(arms, states, config.rmab, config.evi, config.kappa()))
                     .first;
        }
        return it->second;
    }
};

inline std::vector<ArmModel> true_models(const EnvironmentSchedule& env, std::size_t t) {
    std::vector<ArmModel> arms(env.num_arms());
    for (std::size_t i = 0; i < env.num_arms(); ++i) arms[i] = {&env.kernel(i, t), &env.rewards(i)};
    return arms;
}

/// A uniformly random K-subset of the arms.
inline std::vector<std::uint8_t> random_subset(std::size_t num_arms, std::size_t k, RandomStream& rng) {
    std::vector<std::size_t> ids(num_arms);
    for (std::size_t i = 0; i < num_arms; ++i) ids[i] = i;
    for (std::size_t j = 0; j < k; ++j) std::swap(ids[j], ids[j + rng.below(num_arms - j)]);
    std::vector<std::uint8_t> actions(num_arms, 0);
    for (std::size_t j = 0; j < k; ++j) actions[ids[j]] = 1;
    return actions;
}

} // namespace detail

/**
 * One replication of any policy against `env`. Learner policies follow the
 * act / observe / re-estimate / re-solve loop, starting from lambda = 0 and the
 * all-passive policy; every step records regret against the exact oracle at the
 * algorithm's state and feeds the audits.
 */
inline ReplicationResult run_replication(const ExperimentConfig& config, const EnvironmentSchedule& env,
                                         std::size_t replication) {
    const auto started = std::chrono::steady_clock::now();
    const RmabConfig& rmab = env.config();
    const std::size_t n = rmab.num_arms;
    const std::size_t horizon = rmab.horizon;
    const double gamma = rmab.discount;
    const bool learner = config.policy == PolicyKind::ns_whittle || config.policy == PolicyKind::stationary_whittle;

    ReplicationResult result;
    result.replication = replication;
    result.realized_budget = env.budget().total;
    const auto params = resolve_parameters(config);
    result.windows = params.windows;
    result.explorations = params.explorations;
    result.value_bound.bound = value_bound(n, rmab.lambda_cap, gamma);

    RandomStream init_rng(derive_seed(config.seed, "init", replication));
    RandomStream policy_rng(derive_seed(config.seed, "random", replication));
    std::vector<RandomStream> transition_rngs;
    for (std::size_t i = 0; i < n; ++i) transition_rngs.emplace_back(derive_seed(config.seed, "transition", replication, i));

    std::vector<SlidingWindowStats> stats;
    std::vector<WindowedKernelAverage> truth;
    for (std::size_t i = 0; i < n; ++i) {
        stats.emplace_back(rmab.num_states, params.windows[i]);
        truth.emplace_back(rmab.num_states, params.windows[i]);
    }

    auto build_sets = [&](std::size_t t) {
        std::vector<std::vector<ConfidenceSet>> sets(n);
        for (std::size_t i = 0; i < n; ++i)
            sets[i] = config.collapse_sets ? point_mass_sets(env.kernel(i, t))
                                           : build_arm_sets(stats[i], t, params.explorations[i], rmab);
        return sets;
    };

    JointState state = initial_state(env, init_rng);
    // Learner state carried from the previous solve.
    double lambda = 0.0;
    std::vector<std::vector<std::uint8_t>> policies(n, std::vector<std::uint8_t>(rmab.num_states, 0));
    std::vector<QTable> tables;
    std::vector<TransitionKernel> optimistic;
    std::vector<std::vector<ConfidenceSet>> sets = learner ? build_sets(1) : std::vector<std::vector<ConfidenceSet>>{};
    PolicyDecision decision;
    decision.actions.assign(n, 0);
    decision.indices.assign(n, 0.0);

    auto solve = [&](std::size_t t) {
        sets = build_sets(t);
        std::vector<ArmProblem> problems(n);
        for (std::size_t i = 0; i < n; ++i) problems[i] = {sets[i], &env.rewards(i), state.states[i]};
        DualState dual;
        dual.upper = rmab.lambda_cap;
        dual.tolerance = config.kappa();
        auto solution = solve_dual(problems, gamma, rmab.budget, config.evi, dual);
        lambda = solution.lambda;
        tables.clear();
        optimistic.clear();
        policies = solution.policies;
        for (auto& arm : solution.arms) {
            tables.push_back(std::move(arm.q));
            optimistic.push_back(std::move(arm.optimistic));
        }
        double dual_value = lambda * static_cast<double>(rmab.budget) / (1.0 - gamma);
        for (std::size_t i = 0; i < n; ++i) dual_value += tables[i].state_value(state.states[i]);
        result.value_bound.check(dual_value);
        decision = select_actions(whittle_indices(tables, state.states), rmab.budget);
    };
    // With collapsed sets nothing needs to be learned, so the first step is solved too.
    if (learner && config.collapse_sets) solve(1);

    detail::OracleCache cache;
    std::vector<std::uint8_t> bad_flags;
    bad_flags.reserve(horizon);
    double cumulative = 0.0;

    for (std::size_t t = 1; t <= horizon; ++t) {
        const auto arms = detail::true_models(env, t);
        const auto& oracle = cache.get(env, t, arms, state.states, config);

        std::vector<ArmPolicy> acting;
        double lambda_t = 0.0;
        switch (config.policy) {
        case PolicyKind::oracle:
            acting = oracle.arm_policies();
            decision = select_actions(oracle.indices, rmab.budget);
            lambda_t = oracle.lambda;
            break;
        case PolicyKind::random:
            acting.assign(n, ArmPolicy::constant(rmab.num_states,
                                                 static_cast<double>(rmab.budget) / static_cast<double>(n)));
            decision = PolicyDecision{};
            decision.actions = detail::random_subset(n, rmab.budget, policy_rng);
            decision.indices.assign(n, 0.0);
            decision.active_count = rmab.budget;
            decision.eligible_count = rmab.budget;
            break;
        case PolicyKind::ns_whittle:
        case PolicyKind::stationary_whittle:
            for (const auto& p : policies) acting.push_back(ArmPolicy::deterministic(p));
            lambda_t = lambda;
            break;
        }

        auto record = regret_step(oracle, acting, arms, state.states, gamma, rmab.budget, cumulative);
        cumulative = record.cum_regret;
        record.t = t;
        record.lambda_t = lambda_t;
        record.active_count = decision.active_count;
        record.constraint_violation =
            decision.eligible_count > rmab.budget ? decision.eligible_count - rmab.budget : 0;
        result.value_bound.check(record.v_opt);
        result.value_bound.check(record.v_alg);

        if (learner) {
            bool good = true;
            for (std::size_t i = 0; i < n && good; ++i) good = good_event_holds(truth[i], sets[i]);
            result.good_event = result.good_event && good;
            result.good_steps += good ? 1 : 0;
            record.bad_event = is_bad_step(arms, sets);
            if (!tables.empty() && config.audit) {
                std::vector<ArmModel> optimistic_models(n);
                for (std::size_t i = 0; i < n; ++i) optimistic_models[i] = {&optimistic[i], &env.rewards(i)};
                const double v_optimistic =
                    evaluate_policy_value(acting, optimistic_models, state.states, oracle.lambda, gamma, rmab.budget);
                result.value_bound.check(v_optimistic);
                result.optimism.add(optimism_audit(v_optimistic, oracle.value, good));
            }
        }
        bad_flags.push_back(record.bad_event ? 1 : 0);
        result.records.push_back(record);

        const auto outcome = step(env, state, decision.actions, transition_rngs);
        for (std::size_t i = 0; i < n; ++i) {
            const int a = decision.actions[i] ? kActive : kPassive;
            if (learner) {
                stats[i].record(t, state.states[i], a, outcome.next_state.states[i]);
                truth[i].record(t, state.states[i], a, env.kernel(i, t).row(state.states[i], a));
            }
        }
        state = outcome.next_state;
        if (!learner || t == horizon) continue;

        if ((t - 1) % config.solve_every == 0)
            solve(t + 1);
        else
            decision = select_actions(whittle_indices(tables, state.states), rmab.budget);
    }

    const std::size_t min_window = *std::min_element(params.windows.begin(), params.windows.end());
    const double min_exploration = *std::min_element(params.explorations.begin(), params.explorations.end());
    result.bad_events = bad_event_audit(bad_flags, min_window, result.realized_budget, min_exploration);
    result.oracle_solves = cache.solves;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

/// Runs every replication (in parallel when threads > 1) and merges in replication order.
inline RunArtifacts run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    std::optional<EnvironmentSchedule> fixed;
    if (!config.env_file.empty()) {
        fixed = schedule_from_json(Json::parse(read_file(config.env_file)), config.rmab);
        if (fixed->num_arms() != config.rmab.num_arms || fixed->num_states() != config.rmab.num_states ||
            fixed->horizon() != config.rmab.horizon)
            throw InvalidConfig("env_file dimensions differ from the config");
        for (const auto& arm : fixed->kernels())
            for (const auto& k : arm)
                if (const auto check = validate_kernel(k, 0.0); !check) throw InvalidConfig(check.message());
    }

    RunArtifacts artifacts;
    artifacts.config = config;
    artifacts.replications.resize(config.replications);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(config.replications);
    auto worker = [&] {
        for (std::size_t r = next++; r < config.replications; r = next++) {
            try {
                const auto env = replication_environment(config, r, fixed ? &*fixed : nullptr);
                artifacts.replications[r] = run_replication(config, env, r);
            } catch (...) {
                errors[r] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(config.threads, config.replications);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    artifacts.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return artifacts;
}

// *******************************************************
// Emission and re-audit
// *******************************************************

inline constexpr std::string_view kCsvHeader =
    "replication,t,v_opt,v_alg,gap,cum_regret,lambda_t,active_count,constraint_violation,bad_event";

inline std::string regret_csv(const RunArtifacts& artifacts) {
    std::string out(kCsvHeader);
    out += "\r\n";
    for (const auto& rep : artifacts.replications) {
        for (const auto& r : rep.records) {
            out += std::to_string(rep.replication);
            out += ',';
            out += std::to_string(r.t);
            for (double v : {r.v_opt, r.v_alg, r.gap, r.cum_regret, r.lambda_t}) {
                out += ',';
                out += format_double(v);
            }
            out += ',';
            out += std::to_string(r.active_count);
            out += ',';
            out += std::to_string(r.constraint_violation);
            out += ',';
            out += r.bad_event ? '1' : '0';
            out += "\r\n";
        }
    }
    return out;
}

inline Json audit_json(const RunArtifacts& artifacts) {
    Json reps = Json::array();
    OptimismSummary optimism;
    ValueBoundAudit bound;
    std::size_t good_runs = 0;
    std::size_t bound_violations = 0;
    for (const auto& rep : artifacts.replications) {
        optimism.merge(rep.optimism);
        bound.merge(rep.value_bound);
        good_runs += rep.good_event ? 1 : 0;
        const bool within = rep.bad_events.within_bound();
        if (rep.good_event && !within) ++bound_violations;
        const double bad_bound = rep.bad_events.bound;
        reps.push_back({{"replication", rep.replication},
                        {"good_event", rep.good_event},
                        {"good_steps", rep.good_steps},
                        {"realized_budget", rep.realized_budget},
                        {"windows", rep.windows},
                        {"explorations", rep.explorations},
                        {"bad_event",
                         {{"q_size", rep.bad_events.q.size()},
                          {"extended_size", rep.bad_events.extended.size()},
                          {"window", rep.bad_events.window},
                          {"bound", std::isfinite(bad_bound) ? Json(bad_bound) : Json("inf")},
                          {"within_bound", within}}},
                        {"optimism",
                         {{"steps", rep.optimism.steps},
                          {"holds", rep.optimism.holds},
                          {"good_steps", rep.optimism.good_steps},
                          {"good_holds", rep.optimism.good_holds}}},
                        {"value_bound",
                         {{"evaluations", rep.value_bound.evaluations},
                          {"violations", rep.value_bound.violations},
                          {"max_abs", rep.value_bound.max_abs}}},
                        {"oracle_solves", rep.oracle_solves}});
    }
    return {{"replications", std::move(reps)},
            {"summary",
             {{"good_event_runs", good_runs},
              {"bad_event_bound_violations", bound_violations},
              {"optimism_good_rate", optimism.good_rate()},
              {"optimism_good_steps", optimism.good_steps},
              {"value_bound", bound.bound},
              {"value_bound_violations", bound.violations},
              {"value_bound_evaluations", bound.evaluations}}}};
}

inline Json config_json(const RunArtifacts& artifacts) {
    const auto& c = artifacts.config;
    Json env;
    if (c.env_file.empty())
        env = {{"kind", "generated"},
               {"mode", std::string(to_string(c.env_mode))},
               {"target_budget", c.target_budget},
               {"seed_stream", "env"},
               {"jumps_per_arm", c.generator.jumps_per_arm},
               {"anchor_attempts", c.generator.anchor_attempts}};
    else
        env = {{"kind", "file"}, {"path", c.env_file}};
    return {{"config", experiment_config_to_json(c)}, {"environment", std::move(env)}};
}

inline Json timings_json(const RunArtifacts& artifacts) {
    Json reps = Json::array();
    for (const auto& rep : artifacts.replications) reps.push_back(rep.seconds);
    return {{"wall_seconds", artifacts.wall_seconds}, {"replication_seconds", std::move(reps)}};
}

/// Writes regret.csv, audit.json, config.json and timings.json into `dir`.
inline void emit_results(const RunArtifacts& artifacts, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(detail::concat("cannot create '", dir, "': ", ec.message()));
    const std::filesystem::path base(dir);
    write_file((base / "regret.csv").string(), regret_csv(artifacts));
    write_file((base / "audit.json").string(), audit_json(artifacts).dump(2) + "\n");
    write_file((base / "config.json").string(), config_json(artifacts).dump(2) + "\n");
    write_file((base / "timings.json").string(), timings_json(artifacts).dump(2) + "\n");
}

struct RunAuditReport {
    std::vector<std::string> failures;
    std::size_t rows = 0;

    bool ok() const { return failures.empty(); }
};

/**
 * Re-checks an emitted run from its files: header, T rows per replication,
 * cum_regret as the exact running sum of gap, active_count <= K, and the
 * audit summary (value bound, bad-event bound on good-event runs).
 */
inline RunAuditReport audit_run(const std::string& dir) {
    const std::filesystem::path base(dir);
    RunAuditReport report;
    const auto config_doc = Json::parse(read_file((base / "config.json").string()));
    const auto config = parse_experiment_config(config_doc.at("config"));
    const auto rows = parse_csv(read_file((base / "regret.csv").string()));
    auto fail = [&](auto&&... parts) { report.failures.push_back(detail::concat(parts...)); };

    if (rows.empty()) {
        fail("regret.csv is empty");
        return report;
    }
    std::string header;
    for (std::size_t k = 0; k < rows.front().size(); ++k) header += (k ? "," : "") + rows.front()[k];
    if (header != kCsvHeader) fail("unexpected header '", header, "'");

    std::map<std::size_t, std::size_t> per_replication;
    std::map<std::size_t, double> running;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto& row = rows[k];
        if (row.size() != 10) {
            fail("row ", k, " has ", row.size(), " fields");
            continue;
        }
        const auto rep = static_cast<std::size_t>(std::stoull(row[0]));
        const auto t = static_cast<std::size_t>(std::stoull(row[1]));
        const double gap = parse_double(row[4]);
        const double cum = parse_double(row[5]);
        const auto active = static_cast<std::size_t>(std::stoull(row[7]));
        const std::size_t expected_t = ++per_replication[rep];
        if (t != expected_t) fail("replication ", rep, ": row t=", t, " where t=", expected_t, " expected");
        running[rep] += gap;
        if (running[rep] != cum) fail("replication ", rep, " t=", t, ": cum_regret is not the prefix sum of gap");
        if (active > config.rmab.budget) fail("replication ", rep, " t=", t, ": active_count ", active, " > K");
        ++report.rows;
    }
    if (per_replication.size() != config.replications)
        fail("found ", per_replication.size(), " replications, expected ", config.replications);
    for (const auto& [rep, count] : per_replication)
        if (count != config.rmab.horizon) fail("replication ", rep, " has ", count, " rows, expected T");

    const auto audit = Json::parse(read_file((base / "audit.json").string()));
    const auto& summary = audit.at("summary");
    if (summary.at("value_bound_violations").get<std::size_t>() != 0) fail("value bound violated");
    if (summary.at("bad_event_bound_violations").get<std::size_t>() != 0)
        fail("bad-event bound violated on a good-event run");
    return report;
}

} // namespace nsw
