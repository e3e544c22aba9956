// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/catalog.hpp>
#include <groundrec/error.hpp>
#include <groundrec/jsonl.hpp>
#include <groundrec/reward.hpp>
#include <groundrec/rollout.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace groundrec
{

struct RemoteSettings
{
    int max_attempts = 3;
    std::size_t backoff_ms = 250;
    std::size_t timeout_s = 120;
    bool debug = false;
};

struct EmbedderSettings
{
    std::string kind = "toy"; ///< toy | remote
    std::size_t dim = 64;
    std::uint64_t hash_seed = 0;
    std::string endpoint;
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t max_in_flight = 8;
};

struct PolicySettings
{
    std::string model = "policy";
    double temperature = 1.0;
    int max_tokens = 1024;
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t max_in_flight = 8;
};

struct UserAgentSettings
{
    // reference setup used gpt-4.1-nano-2025-04-14
    std::string model = "gpt-4.1-nano-2025-04-14";
    double temperature = 0.0;
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t max_in_flight = 8;
    double jaccard_threshold = 0.1;
};

/// Input locations that commands read when the matching flag is absent.
struct DataPaths
{
    std::string catalog;
    std::string index;
    std::string recall;
};

struct EvaluationSettings
{
    std::vector<std::size_t> cutoffs { 5, 10, 20 };
    std::size_t rank_ceiling = 4096;
    std::vector<std::size_t> caps { 1, 3, 6 };
};

/// Everything a run needs, loaded from an INI document whose sections mirror the modules.
struct Config
{
    std::uint64_t seed = 0;
    SplitRatios split_ratios;
    DataPaths paths;
    EmbedderSettings embedder;
    RolloutConfig rollout;
    PolicySettings policy;
    UserAgentSettings user_agent;
    GrpoHyper reward;
    EvaluationSettings evaluation;
    RemoteSettings remote;
};

namespace config_detail
{

    template <typename T>
    auto parse_number(std::string const& key, std::string const& text) -> T
    {
        auto value = T {};
        auto const* end = text.data() + text.size();
        auto const [ptr, ec] = std::from_chars(text.data(), end, value);
        if (ec != std::errc {} || ptr != end)
            throw UsageError("config key " + key + ": invalid value \"" + text + "\"");
        return value;
    }

    inline auto parse_bool(std::string const& key, std::string const& text) -> bool
    {
        if (text == "true" || text == "1" || text == "yes")
            return true;
        if (text == "false" || text == "0" || text == "no")
            return false;
        throw UsageError("config key " + key + ": expected a boolean, got \"" + text + "\"");
    }

    inline auto parse_list(std::string const& key, std::string const& text) -> std::vector<std::size_t>
    {
        auto out = std::vector<std::size_t> {};
        auto in = std::istringstream(text);
        auto item = std::string {};
        while (std::getline(in, item, ','))
            out.push_back(parse_number<std::size_t>(key, std::string(trim(item))));
        if (out.empty())
            throw UsageError("config key " + key + ": empty list");
        return out;
    }

    inline auto join(std::vector<std::size_t> const& values) -> std::string
    {
        auto out = std::string {};
        for (auto i = std::size_t { 0 }; i < values.size(); ++i)
            out += (i ? "," : "") + std::to_string(values[i]);
        return out;
    }

} // namespace config_detail

inline auto parse_aggregation(std::string const& text) -> LossAggregation
{
    if (text == "token-mean")
        return LossAggregation::TokenMean;
    if (text == "sequence-sum")
        return LossAggregation::SequenceSum;
    throw UsageError("aggregation must be token-mean or sequence-sum, got \"" + text + "\"");
}

inline auto to_string(LossAggregation a) -> std::string_view
{
    return a == LossAggregation::TokenMean ? "token-mean" : "sequence-sum";
}

/// Applies one `section.key = value` setting. Unknown keys are usage errors.
inline void set_config_value(Config& c, std::string const& key, std::string const& raw)
{
    using namespace config_detail;
    auto const value = std::string(trim(raw));
    auto const num = [&]<typename T>(T& field) { field = parse_number<T>(key, value); };

    if (key == "run.seed") num(c.seed);
    else if (key == "data.split_ratios")
    {
        auto const parts = parse_list(key, value);
        if (parts.size() != 3)
            throw UsageError("data.split_ratios needs three values");
        c.split_ratios = SplitRatios { static_cast<std::uint32_t>(parts[0]), static_cast<std::uint32_t>(parts[1]),
                                       static_cast<std::uint32_t>(parts[2]) };
    }
    else if (key == "data.catalog") c.paths.catalog = value;
    else if (key == "data.index") c.paths.index = value;
    else if (key == "data.recall") c.paths.recall = value;
    else if (key == "run.parallelism") num(c.rollout.parallelism);
    else if (key == "embedder.kind")
    {
        if (value != "toy" && value != "remote")
            throw UsageError("embedder.kind must be toy or remote");
        c.embedder.kind = value;
    }
    else if (key == "embedder.dim") num(c.embedder.dim);
    else if (key == "embedder.hash_seed") num(c.embedder.hash_seed);
    else if (key == "embedder.endpoint") c.embedder.endpoint = value;
    else if (key == "embedder.model") c.embedder.model = value;
    else if (key == "embedder.api_key_env") c.embedder.api_key_env = value;
    else if (key == "embedder.max_in_flight") num(c.embedder.max_in_flight);
    else if (key == "rollout.max_groundings") num(c.rollout.max_groundings);
    else if (key == "rollout.k_per_ground") num(c.rollout.k_per_ground);
    else if (key == "rollout.recall_size") num(c.rollout.recall_size);
    else if (key == "rollout.group_size") num(c.rollout.group_size);
    else if (key == "rollout.max_turns") c.rollout.max_turns = parse_number<std::size_t>(key, value);
    else if (key == "rollout.abort_retries") num(c.rollout.abort_retries);
    else if (key == "policy.model") c.policy.model = value;
    else if (key == "policy.temperature") num(c.policy.temperature);
    else if (key == "policy.max_tokens") num(c.policy.max_tokens);
    else if (key == "policy.api_key_env") c.policy.api_key_env = value;
    else if (key == "policy.max_in_flight") num(c.policy.max_in_flight);
    else if (key == "user_agent.model") c.user_agent.model = value;
    else if (key == "user_agent.temperature") num(c.user_agent.temperature);
    else if (key == "user_agent.api_key_env") c.user_agent.api_key_env = value;
    else if (key == "user_agent.max_in_flight") num(c.user_agent.max_in_flight);
    else if (key == "user_agent.jaccard_threshold") num(c.user_agent.jaccard_threshold);
    else if (key == "reward.clip_eps") num(c.reward.clip_eps);
    else if (key == "reward.kl_beta") num(c.reward.kl_beta);
    else if (key == "reward.aggregation") c.reward.aggregation = parse_aggregation(value);
    else if (key == "evaluation.cutoffs") c.evaluation.cutoffs = parse_list(key, value);
    else if (key == "evaluation.rank_ceiling") num(c.evaluation.rank_ceiling);
    else if (key == "evaluation.caps") c.evaluation.caps = parse_list(key, value);
    else if (key == "remote.max_attempts") num(c.remote.max_attempts);
    else if (key == "remote.backoff_ms") num(c.remote.backoff_ms);
    else if (key == "remote.timeout_s") num(c.remote.timeout_s);
    else if (key == "remote.debug") c.remote.debug = parse_bool(key, value);
    else throw UsageError("unknown config key " + key);
}

inline auto parse_config(std::string const& ini_text) -> Config
{
    auto tree = boost::property_tree::ptree {};
    try
    {
        auto in = std::istringstream(ini_text);
        boost::property_tree::ini_parser::read_ini(in, tree);
    }
    catch (boost::property_tree::ini_parser_error const& e)
    {
        throw UsageError(std::string("config: ") + e.what());
    }
    auto config = Config {};
    for (auto const& [section, keys]: tree)
    {
        if (keys.empty())
            throw UsageError("config key " + section + " must live inside a section");
        for (auto const& [key, value]: keys)
            set_config_value(config, section + "." + key, value.data());
    }
    config.rollout.validate();
    config.reward.validate();
    return config;
}

inline auto load_config(std::filesystem::path const& path) -> Config
{
    return parse_config(read_file_bytes(path));
}

/// Effective settings, echoed into run manifests and reports.
inline auto to_json(Config const& c) -> ordered_json
{
    using config_detail::join;
    auto doc = ordered_json::object();
    doc["run"] = { { "seed", c.seed }, { "parallelism", c.rollout.parallelism } };
    doc["data"] = { { "split_ratios", join({ c.split_ratios.train, c.split_ratios.valid, c.split_ratios.test }) },
                    { "catalog", c.paths.catalog },
                    { "index", c.paths.index },
                    { "recall", c.paths.recall } };
    doc["embedder"] = { { "kind", c.embedder.kind },       { "dim", c.embedder.dim },
                        { "hash_seed", c.embedder.hash_seed }, { "endpoint", c.embedder.endpoint },
                        { "model", c.embedder.model },     { "max_in_flight", c.embedder.max_in_flight } };
    doc["rollout"] = { { "max_groundings", c.rollout.max_groundings },
                       { "k_per_ground", c.rollout.k_per_ground },
                       { "recall_size", c.rollout.recall_size },
                       { "group_size", c.rollout.group_size },
                       { "max_turns", c.rollout.turn_cap() },
                       { "abort_retries", c.rollout.abort_retries } };
    doc["policy"] = { { "model", c.policy.model },
                      { "temperature", c.policy.temperature },
                      { "max_tokens", c.policy.max_tokens } };
    doc["user_agent"] = { { "model", c.user_agent.model },
                          { "temperature", c.user_agent.temperature },
                          { "jaccard_threshold", c.user_agent.jaccard_threshold } };
    doc["reward"] = { { "clip_eps", c.reward.clip_eps },
                      { "kl_beta", c.reward.kl_beta },
                      { "aggregation", to_string(c.reward.aggregation) } };
    doc["evaluation"] = { { "cutoffs", join(c.evaluation.cutoffs) },
                          { "rank_ceiling", c.evaluation.rank_ceiling },
                          { "caps", join(c.evaluation.caps) } };
    doc["remote"] = { { "max_attempts", c.remote.max_attempts },
                      { "backoff_ms", c.remote.backoff_ms },
                      { "timeout_s", c.remote.timeout_s },
                      { "debug", c.remote.debug } };
    return doc;
}

} // namespace groundrec
