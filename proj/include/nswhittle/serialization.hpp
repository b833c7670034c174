#pragma once

// JSON snapshots of environment schedules and RFC-4180 CSV helpers.

#include "core.hpp"
#include "environment.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace nsw {

using Json = nlohmann::json;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double value) {
    std::array<char, 64> buffer{};
    const auto [end, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    if (ec != std::errc{}) throw IoError("failed to format a double");
    return {buffer.data(), end};
}

inline double parse_double(std::string_view text) {
    double value = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size())
        throw IoError(detail::concat("not a number: '", text, "'"));
    return value;
}

/// One RFC-4180 field; quoted only when it contains a delimiter, quote or line break.
inline std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Splits RFC-4180 text into records of fields (CRLF or LF line ends).
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t k = 0; k < text.size(); ++k) {
        const char c = text[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < text.size() && text[k + 1] == '"') {
                    field += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && k + 1 < text.size() && text[k + 1] == '\n') ++k;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            field.clear();
            row.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw IoError("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(detail::concat("cannot open '", path, "'"));
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(detail::concat("cannot write '", path, "'"));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError(detail::concat("write to '", path, "' failed"));
}

// *******************************************************
// Schedules
// *******************************************************

/// {"num_arms", "num_states", "horizon", "mode", "seed", "kernels", "rewards"} plus the config scalars.
inline Json schedule_to_json(const EnvironmentSchedule& env) {
    const auto& config = env.config();
    Json kernels = Json::array();
    for (std::size_t i = 0; i < env.num_arms(); ++i) {
        Json arm = Json::array();
        for (std::size_t t = 1; t <= env.horizon(); ++t) {
            const auto& k = env.kernel(i, t);
            Json per_state = Json::array();
            for (std::size_t s = 0; s < k.num_states(); ++s) {
                Json per_action = Json::array();
                for (int a = 0; a < static_cast<int>(kNumActions); ++a) {
                    const auto row = k.row(s, a);
                    per_action.push_back(std::vector<double>(row.begin(), row.end()));
                }
                per_state.push_back(std::move(per_action));
            }
            arm.push_back(std::move(per_state));
        }
        kernels.push_back(std::move(arm));
    }
    Json rewards = Json::array();
    for (const auto& table : env.reward_tables()) {
        Json per_state = Json::array();
        for (std::size_t s = 0; s < table.num_states(); ++s) per_state.push_back({table(s, kPassive), table(s, kActive)});
        rewards.push_back(std::move(per_state));
    }
    return {{"num_arms", env.num_arms()},
            {"num_states", env.num_states()},
            {"horizon", env.horizon()},
            {"mode", std::string(to_string(env.mode()))},
            {"seed", env.seed()},
            {"target_budget", env.target_budget()},
            {"kernels", std::move(kernels)},
            {"rewards", std::move(rewards)},
            {"budget", config.budget},
            {"discount", config.discount},
            {"failure_prob", config.failure_prob},
            {"lambda_cap", config.lambda_cap},
            {"p_min_floor", config.p_min_floor}};
}

/**
 * Rebuilds a schedule. Dimensions come from the document; the remaining
 * RmabConfig scalars are taken from `base` unless present in the document.
 */
inline EnvironmentSchedule schedule_from_json(const Json& doc, RmabConfig base) {
    try {
        base.num_arms = doc.at("num_arms").get<std::size_t>();
        base.num_states = doc.at("num_states").get<std::size_t>();
        base.horizon = doc.at("horizon").get<std::size_t>();
        if (doc.contains("budget")) base.budget = doc["budget"].get<std::size_t>();
        if (doc.contains("discount")) base.discount = doc["discount"].get<double>();
        if (doc.contains("failure_prob")) base.failure_prob = doc["failure_prob"].get<double>();
        if (doc.contains("lambda_cap")) base.lambda_cap = doc["lambda_cap"].get<double>();
        if (doc.contains("p_min_floor")) base.p_min_floor = doc["p_min_floor"].get<double>();
        base.validate();
        const auto nested = doc.at("kernels").get<std::vector<std::vector<std::vector<std::vector<std::vector<double>>>>>>();
        std::vector<std::vector<TransitionKernel>> kernels;
        for (const auto& arm : nested) {
            std::vector<TransitionKernel> per_time;
            per_time.reserve(arm.size());
            for (const auto& k : arm) per_time.push_back(TransitionKernel::from_nested(k));
            kernels.push_back(std::move(per_time));
        }
        std::vector<RewardTable> rewards;
        for (const auto& r : doc.at("rewards").get<std::vector<std::vector<std::vector<double>>>>())
            rewards.push_back(RewardTable::from_nested(r));
        const EnvMode mode = doc.contains("mode") ? parse_env_mode(doc["mode"].get<std::string>()) : EnvMode::drift;
        const auto seed = doc.value("seed", std::uint64_t{0});
        const double target = doc.value("target_budget", variation_budget(kernels).total);
        return EnvironmentSchedule(base, mode, seed, target, std::move(kernels), std::move(rewards));
    } catch (const Json::exception& e) {
        throw InvalidConfig(detail::concat("malformed schedule: ", e.what()));
    }
}

} // namespace nsw
