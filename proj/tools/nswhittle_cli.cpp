// nswhittle: run, tune and audit restless-bandit experiments.
//
//   nswhittle run --config exp.json [--policy P] [--replications R] [--seed S]
//                 [--out DIR] [--audit] [--solve-every K] [--threads N] [--save-env]
//   nswhittle tune --config exp.json
//   nswhittle audit --run DIR
//
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 audit failure.

#include <nswhittle/nswhittle.hpp>

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAudit = 3;

nsw::ExperimentConfig load_config(const std::string& path) {
    nsw::Json doc;
    try {
        doc = nsw::Json::parse(nsw::read_file(path));
    } catch (const nsw::Json::exception& e) {
        throw nsw::InvalidConfig(nsw::detail::concat("'", path, "' is not valid JSON: ", e.what()));
    } catch (const nsw::IoError& e) {
        throw nsw::InvalidConfig(e.what());
    }
    auto config = nsw::parse_experiment_config(doc);
    // A relative env_file is resolved against the config's directory.
    if (!config.env_file.empty() && std::filesystem::path(config.env_file).is_relative())
        config.env_file = (std::filesystem::path(path).parent_path() / config.env_file).string();
    return config;
}

struct RunOptions {
    std::string config;
    std::optional<std::string> policy;
    std::optional<std::size_t> replications;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool audit = false;
    std::optional<std::size_t> solve_every;
    std::optional<std::size_t> threads;
    bool save_env = false;
};

int cmd_run(const RunOptions& opt) {
    nsw::ExperimentConfig config;
    try {
        config = load_config(opt.config);
        if (opt.policy) config.policy = nsw::parse_policy(*opt.policy);
        if (opt.replications) config.replications = *opt.replications;
        if (opt.seed) config.seed = *opt.seed;
        if (opt.out) config.output = *opt.out;
        if (opt.audit) config.audit = true;
        if (opt.solve_every) config.solve_every = *opt.solve_every;
        if (opt.threads) config.threads = *opt.threads;
        config.validate();
    } catch (const nsw::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    nsw::RunArtifacts artifacts;
    try {
        artifacts = nsw::run_experiment(config);
        nsw::emit_results(artifacts, config.output);
        if (opt.save_env && config.env_file.empty()) {
            const auto env = nsw::replication_environment(config, 0);
            nsw::write_file((std::filesystem::path(config.output) / "env.json").string(),
                            nsw::schedule_to_json(env).dump() + "\n");
        }
    } catch (const nsw::InvalidConfig& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }

    double mean_final = 0.0;
    for (const auto& rep : artifacts.replications) mean_final += rep.records.back().cum_regret;
    mean_final /= static_cast<double>(artifacts.replications.size());
    std::cout << "policy " << nsw::to_string(config.policy) << ", " << artifacts.replications.size()
              << " replication(s), T=" << config.rmab.horizon << "\n"
              << "mean final cumulative regret " << mean_final << "\n"
              << "wrote " << config.output << "/{regret.csv,audit.json,config.json,timings.json}\n";

    if (config.audit) {
        const auto audit = nsw::audit_json(artifacts).at("summary");
        std::cout << audit.dump(2) << "\n";
        if (audit.at("value_bound_violations").get<std::size_t>() != 0 ||
            audit.at("bad_event_bound_violations").get<std::size_t>() != 0)
            return kExitAudit;
    }
    return kExitOk;
}

int cmd_tune(const std::string& path) {
    nsw::ExperimentConfig config;
    try {
        config = load_config(path);
    } catch (const nsw::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    const std::size_t n = config.rmab.num_arms;
    const std::vector<double> arm_budgets(n, config.target_budget / static_cast<double>(n));
    const auto tuned =
        nsw::tune_parameters(config.rmab.num_states, config.rmab.horizon, arm_budgets, config.target_budget);
    std::cout << "arm,window,exploration\n";
    for (std::size_t i = 0; i < n; ++i)
        std::cout << i << "," << tuned.windows[i] << "," << nsw::format_double(tuned.explorations[i]) << "\n";
    return kExitOk;
}

int cmd_audit(const std::string& dir) {
    try {
        const auto report = nsw::audit_run(dir);
        for (const auto& f : report.failures) std::cout << "FAIL " << f << "\n";
        std::cout << (report.ok() ? "audit ok" : "audit failed") << " (" << report.rows << " rows)\n";
        return report.ok() ? kExitOk : kExitAudit;
    } catch (const nsw::InvalidConfig& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sliding-window optimistic Whittle-index learning for non-stationary restless bandits"};
    app.require_subcommand(1);

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Simulate a policy and write regret.csv / audit.json");
    run_cmd->add_option("--config", run.config, "Experiment JSON")->required();
    run_cmd->add_option("--policy", run.policy, "ns_whittle | oracle | random | stationary_whittle");
    run_cmd->add_option("--replications", run.replications);
    run_cmd->add_option("--seed", run.seed);
    run_cmd->add_option("--out", run.out, "Output directory");
    run_cmd->add_flag("--audit", run.audit, "Enable the optimism audit and fail on audit violations");
    run_cmd->add_option("--solve-every", run.solve_every, "Re-solve the dual every k steps");
    run_cmd->add_option("--threads", run.threads, "Replications run concurrently");
    run_cmd->add_flag("--save-env", run.save_env, "Also write the replication-0 schedule as env.json");

    std::string tune_config;
    auto* tune_cmd = app.add_subcommand("tune", "Print the tuned window and exploration per arm");
    tune_cmd->add_option("--config", tune_config, "Experiment JSON")->required();

    std::string audit_dir;
    auto* audit_cmd = app.add_subcommand("audit", "Re-verify the invariants of an emitted run");
    audit_cmd->add_option("--run", audit_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    if (*run_cmd) return cmd_run(run);
    if (*tune_cmd) return cmd_tune(tune_config);
    if (*audit_cmd) return cmd_audit(audit_dir);
    return kExitConfig;
}
