// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/agents.hpp>
#include <groundrec/catalog.hpp>
#include <groundrec/config.hpp>
#include <groundrec/embedder.hpp>
#include <groundrec/evaluation.hpp>
#include <groundrec/grounding.hpp>
#include <groundrec/manifest.hpp>
#include <groundrec/remote_agents.hpp>
#include <groundrec/remote_embedder.hpp>
#include <groundrec/reward.hpp>
#include <groundrec/rollout.hpp>
#include <groundrec/vector_store.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace groundrec::cli
{

enum ExitCode : int
{
    exit_ok = 0,
    exit_usage = 1,
    exit_data = 2,
    exit_remote = 3,
};

namespace detail
{

    namespace fs = std::filesystem;

    struct Common
    {
        std::string config_path;
        std::optional<std::uint64_t> seed;
    };

    inline auto load(Common const& common) -> Config
    {
        auto config = common.config_path.empty() ? Config {} : load_config(common.config_path);
        if (common.seed)
            config.seed = *common.seed;
        return config;
    }

    inline auto client(std::string const& endpoint,
                       std::string const& model,
                       std::string const& api_key_env,
                       std::size_t max_in_flight,
                       RemoteSettings const& remote) -> std::shared_ptr<OpenAIClient const>
    {
        if (endpoint.empty())
            throw UsageError("a remote endpoint URL is required");
        return std::make_shared<OpenAIClient const>(EndpointConfig {
            .base_url = endpoint,
            .model = model,
            .api_key_env = api_key_env,
            .max_attempts = remote.max_attempts,
            .initial_backoff = std::chrono::milliseconds(remote.backoff_ms),
            .timeout = std::chrono::seconds(remote.timeout_s),
            .max_in_flight = static_cast<std::ptrdiff_t>(max_in_flight),
            .debug = remote.debug,
        });
    }

    inline auto embedder(Config const& config, std::size_t dim) -> std::unique_ptr<Embedder>
    {
        if (config.embedder.kind == "toy")
            return std::make_unique<ToyEmbedder>(dim, config.embedder.hash_seed);
        if (config.embedder.kind == "remote")
            return std::make_unique<RemoteEmbedder>(client(config.embedder.endpoint,
                                                           config.embedder.model,
                                                           config.embedder.api_key_env,
                                                           config.embedder.max_in_flight,
                                                           config.remote),
                                                    dim);
        throw UsageError("unknown embedder kind " + config.embedder.kind);
    }

    inline auto policy(std::string const& spec, Config const& config) -> std::unique_ptr<Policy>
    {
        if (spec.starts_with("scripted:"))
            return std::make_unique<ScriptedPolicy>(ScriptedPolicy::load(spec.substr(9)));
        if (spec.starts_with("remote:"))
            return std::make_unique<RemotePolicy>(
                client(spec.substr(7), config.policy.model, config.policy.api_key_env, config.policy.max_in_flight,
                       config.remote),
                RemotePolicyOptions { .temperature = config.policy.temperature,
                                      .seed = derive_seed(config.seed, "policy"),
                                      .max_tokens = config.policy.max_tokens });
        throw UsageError("--policy must be scripted:FILE or remote:URL");
    }

    inline auto users(std::string const& spec, Config const& config, ItemCatalog const& catalog)
        -> std::unique_ptr<UserAgentFactory>
    {
        if (spec == "sim")
            return std::make_unique<SimulatedUserAgentFactory>(catalog, config.user_agent.jaccard_threshold);
        if (spec.starts_with("remote:"))
            return std::make_unique<RemoteUserAgentFactory>(client(spec.substr(7), config.user_agent.model,
                                                                   config.user_agent.api_key_env,
                                                                   config.user_agent.max_in_flight, config.remote),
                                                            config.user_agent.temperature, catalog);
        throw UsageError("--user-agent must be sim or remote:URL");
    }

    /// Rejects malformed agent specs before any file is read.
    inline void check_agent_specs(std::string const& policy_spec, std::string const& users_spec)
    {
        if (!policy_spec.starts_with("scripted:") && !policy_spec.starts_with("remote:"))
            throw UsageError("--policy must be scripted:FILE or remote:URL");
        if (users_spec != "sim" && !users_spec.starts_with("remote:"))
            throw UsageError("--user-agent must be sim or remote:URL");
    }

    /// Fills empty path flags from the [data] section; catalog and index must end up set.
    inline void resolve_paths(Config const& config, std::string& catalog, std::string& index, std::string& recall)
    {
        if (catalog.empty())
            catalog = config.paths.catalog;
        if (index.empty())
            index = config.paths.index;
        if (recall.empty())
            recall = config.paths.recall;
        if (catalog.empty())
            throw UsageError("--catalog is required (or set [data] catalog)");
        if (index.empty())
            throw UsageError("--index is required (or set [data] index)");
    }

    inline auto manifest_path(fs::path const& out) -> fs::path
    {
        return fs::path(out.string() + ".manifest.json");
    }

    inline auto write_json(fs::path const& path, ordered_json const& doc) -> void
    {
        write_file_bytes(path, doc.dump(2) + "\n");
    }

    /// Store, embedder and grounder kept together for the lifetime of a command.
    struct Index
    {
        EmbeddingStore store;
        std::unique_ptr<Embedder> embedder;
        std::unique_ptr<Grounder> grounder;

        Index(fs::path const& path, Config const& config):
            store(EmbeddingStore::load(path)), embedder(detail::embedder(config, store.dimension())),
            grounder(std::make_unique<Grounder>(store, *embedder))
        {
        }
    };

} // namespace detail

/// Entry point shared by the executable and the tests.
inline auto run(std::vector<std::string> const& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
    -> int
{
    using namespace detail;

    auto app = CLI::App("Grounded multi-turn recommendation rollouts: ingest, index, roll out, score, evaluate.",
                        "groundrec");
    app.set_version_flag("--version", [] {
        return "groundrec " + std::string(version_string) + "\nschemas: " + schema_versions().dump();
    });
    app.require_subcommand(1);

    auto common = Common {};
    auto const add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "INI configuration file")->check(CLI::ExistingFile);
        cmd->add_option("--seed", common.seed, "Master seed (overrides [run] seed)");
    };

    // ingest
    auto ingest_catalog = std::string {};
    auto ingest_interactions = std::string {};
    auto ingest_out = std::string {};
    auto* ingest_cmd = app.add_subcommand("ingest", "Build chronological sequences and train/valid/test splits");
    ingest_cmd->add_option("--catalog", ingest_catalog, "Catalog JSON-lines")->required();
    ingest_cmd->add_option("--interactions", ingest_interactions, "Interactions JSON-lines")->required();
    ingest_cmd->add_option("--out-dir", ingest_out, "Output directory")->required();
    add_common(ingest_cmd);

    // build-index
    auto index_catalog = std::string {};
    auto index_out = std::string {};
    auto index_dim = std::optional<std::size_t> {};
    auto index_kind = std::optional<std::string> {};
    auto index_endpoint = std::string {};
    auto index_checkpoint = std::string {};
    auto* index_cmd = app.add_subcommand("build-index", "Embed every catalog title into a checksummed store");
    index_cmd->add_option("--catalog", index_catalog, "Catalog JSON-lines")->required();
    index_cmd->add_option("--out", index_out, "Store file to write")->required();
    index_cmd->add_option("--dim", index_dim, "Embedding dimension");
    index_cmd->add_option("--embedder", index_kind, "toy or remote")->check(CLI::IsMember({ "toy", "remote" }));
    index_cmd->add_option("--endpoint", index_endpoint, "Embedding service base URL (remote)");
    index_cmd->add_option("--checkpoint", index_checkpoint, "Partial-progress file kept on failure");
    add_common(index_cmd);

    // rollout
    auto ro_split = std::string {};
    auto ro_catalog = std::string {};
    auto ro_index = std::string {};
    auto ro_recall = std::string {};
    auto ro_policy = std::string {};
    auto ro_users = std::string("sim");
    auto ro_out = std::string {};
    auto ro_group = std::optional<std::size_t> {};
    auto ro_cap = std::optional<std::size_t> {};
    auto ro_parallel = std::optional<std::size_t> {};
    auto* rollout_cmd = app.add_subcommand("rollout", "Run G grounded episodes per input sequence");
    rollout_cmd->add_option("--split", ro_split, "Split JSON-lines")->required();
    rollout_cmd->add_option("--catalog", ro_catalog, "Catalog JSON-lines (default: [data] catalog)");
    rollout_cmd->add_option("--index", ro_index, "Embedding store (default: [data] index)");
    rollout_cmd->add_option("--recall", ro_recall, "Initial recall JSON-lines");
    rollout_cmd->add_option("--policy", ro_policy, "scripted:FILE or remote:URL")->required();
    rollout_cmd->add_option("--user-agent", ro_users, "sim or remote:URL");
    rollout_cmd->add_option("--out", ro_out, "Trajectory JSON-lines to write")->required();
    rollout_cmd->add_option("--group-size", ro_group, "Episodes per input");
    rollout_cmd->add_option("--max-groundings", ro_cap, "Grounding cap per episode");
    rollout_cmd->add_option("--parallelism", ro_parallel, "Concurrent groups");
    add_common(rollout_cmd);

    // score
    auto sc_traj = std::string {};
    auto sc_logprobs = std::string {};
    auto sc_split = std::string {};
    auto sc_index = std::string {};
    auto sc_out = std::string {};
    auto* score_cmd = app.add_subcommand("score", "Rewards, group advantages and masked policy loss per episode");
    score_cmd->add_option("--traj", sc_traj, "Trajectory JSON-lines")->required();
    score_cmd->add_option("--logprobs", sc_logprobs, "Per-token log-probabilities JSON-lines")->required();
    score_cmd->add_option("--split", sc_split, "Split JSON-lines holding the targets")->required();
    score_cmd->add_option("--index", sc_index, "Embedding store")->required();
    score_cmd->add_option("--out", sc_out, "Scored JSON-lines to write")->required();
    add_common(score_cmd);

    // evaluate
    auto ev_traj = std::string {};
    auto ev_index = std::string {};
    auto ev_targets = std::string {};
    auto ev_out = std::string {};
    auto* eval_cmd = app.add_subcommand("evaluate", "Full-ranking HR@K / NDCG@K of final answers");
    eval_cmd->add_option("--traj", ev_traj, "Trajectory JSON-lines")->required();
    eval_cmd->add_option("--index", ev_index, "Embedding store")->required();
    eval_cmd->add_option("--targets", ev_targets, "Split JSON-lines holding the targets")->required();
    eval_cmd->add_option("--out", ev_out, "Report JSON to write")->required();
    add_common(eval_cmd);

    // analyze
    auto* analyze_cmd = app.add_subcommand("analyze", "Trajectory analyses");
    analyze_cmd->require_subcommand(1);
    auto an_traj = std::string {};
    auto an_train = std::string {};
    auto an_targets = std::string {};
    auto an_out = std::string {};
    auto* difficulty_cmd = analyze_cmd->add_subcommand("difficulty", "Mean target difficulty per grounding bin");
    difficulty_cmd->add_option("--traj", an_traj, "Trajectory JSON-lines")->required();
    difficulty_cmd->add_option("--train", an_train, "Training split (popularity source)")->required();
    difficulty_cmd->add_option("--targets", an_targets, "Split JSON-lines holding the targets")->required();
    difficulty_cmd->add_option("--out", an_out, "Report JSON to write")->required();
    add_common(difficulty_cmd);

    auto cap_split = std::string {};
    auto cap_catalog = std::string {};
    auto cap_index = std::string {};
    auto cap_recall = std::string {};
    auto cap_policy = std::string {};
    auto cap_users = std::string("sim");
    auto cap_out = std::string {};
    auto cap_list = std::vector<std::size_t> {};
    auto* cap_cmd = analyze_cmd->add_subcommand("rank-vs-cap", "Mean target rank under several grounding caps");
    cap_cmd->add_option("--split", cap_split, "Split JSON-lines")->required();
    cap_cmd->add_option("--catalog", cap_catalog, "Catalog JSON-lines (default: [data] catalog)");
    cap_cmd->add_option("--index", cap_index, "Embedding store (default: [data] index)");
    cap_cmd->add_option("--recall", cap_recall, "Initial recall JSON-lines");
    cap_cmd->add_option("--policy", cap_policy, "scripted:FILE or remote:URL")->required();
    cap_cmd->add_option("--user-agent", cap_users, "sim or remote:URL");
    cap_cmd->add_option("--caps", cap_list, "Grounding caps, ascending")->delimiter(',');
    cap_cmd->add_option("--out", cap_out, "Report JSON to write")->required();
    add_common(cap_cmd);

    // manifest-verify
    auto mv_path = std::string {};
    auto* verify_cmd = app.add_subcommand("manifest-verify", "Re-check the checksums recorded in a run manifest");
    verify_cmd->add_option("manifest", mv_path, "Manifest JSON")->required();

    auto argv = std::vector<char const*> { "groundrec" };
    for (auto const& a: args)
        argv.push_back(a.c_str());

    try
    {
        app.parse(static_cast<int>(argv.size()), argv.data());
    }
    catch (CLI::CallForHelp const& e)
    {
        return app.exit(e, out, err);
    }
    catch (CLI::CallForAllHelp const& e)
    {
        return app.exit(e, out, err);
    }
    catch (CLI::CallForVersion const& e)
    {
        return app.exit(e, out, err);
    }
    catch (CLI::ParseError const& e)
    {
        app.exit(e, out, err);
        return exit_usage;
    }

    auto const argv_copy = args;
    try
    {
        if (*ingest_cmd)
        {
            auto const config = load(common);
            auto manifest = RunManifest("ingest", argv_copy);
            manifest.set_config(to_json(config));
            manifest.set_seed(config.seed);
            auto result = ingest(ingest_catalog, ingest_interactions);
            if (result.skipped_users > 0)
                err << "warning: skipped " << result.skipped_users << " user(s) with fewer than two usable events\n";
            if (result.dropped_repeats > 0)
                err << "warning: removed " << result.dropped_repeats << " history event(s) repeating the target\n";
            auto const splits = split(std::move(result.sequences), config.split_ratios, derive_seed(config.seed, "split"));
            auto const dir = fs::path(ingest_out);
            fs::create_directories(dir);
            write_sequences(dir / "train.jsonl", splits.train);
            write_sequences(dir / "valid.jsonl", splits.valid);
            write_sequences(dir / "test.jsonl", splits.test);
            manifest.add_input(ingest_catalog);
            manifest.add_input(ingest_interactions);
            for (auto const* name: { "train.jsonl", "valid.jsonl", "test.jsonl" })
                manifest.add_output(dir / name);
            manifest.add_count("skipped_users", result.skipped_users);
            manifest.add_count("train", splits.train.size());
            manifest.add_count("valid", splits.valid.size());
            manifest.add_count("test", splits.test.size());
            manifest.write(dir / "ingest.manifest.json");
            out << "train " << splits.train.size() << ", valid " << splits.valid.size() << ", test "
                << splits.test.size() << "\n";
        }
        else if (*index_cmd)
        {
            auto config = load(common);
            if (index_kind)
                config.embedder.kind = *index_kind;
            if (index_dim)
                config.embedder.dim = *index_dim;
            if (!index_endpoint.empty())
                config.embedder.endpoint = index_endpoint;
            auto manifest = RunManifest("build-index", argv_copy);
            manifest.set_config(to_json(config));
            manifest.set_seed(config.seed);
            auto const catalog = load_catalog(index_catalog);
            auto const emb = embedder(config, config.embedder.dim);
            auto options = BuildOptions {};
            if (!index_checkpoint.empty())
                options.checkpoint = index_checkpoint;
            auto const store = build_index(catalog, *emb, options);
            store.save(index_out);
            manifest.add_input(index_catalog);
            manifest.add_output(index_out);
            manifest.add_count("items", store.size());
            manifest.write(manifest_path(index_out));
            out << "indexed " << store.size() << " items, dim " << store.dimension() << "\n";
        }
        else if (*rollout_cmd)
        {
            auto config = load(common);
            if (ro_group)
                config.rollout.group_size = *ro_group;
            if (ro_cap)
                config.rollout.max_groundings = *ro_cap;
            if (ro_parallel)
                config.rollout.parallelism = *ro_parallel;
            config.rollout.validate();
            check_agent_specs(ro_policy, ro_users);
            resolve_paths(config, ro_catalog, ro_index, ro_recall);
            auto manifest = RunManifest("rollout", argv_copy);
            manifest.set_config(to_json(config));
            manifest.set_seed(config.seed);

            auto const catalog = load_catalog(ro_catalog);
            auto const sequences = read_sequences(ro_split, &catalog);
            auto const index = Index(ro_index, config);
            if (index.store.size() != catalog.size())
                throw DataError("index has " + std::to_string(index.store.size()) + " rows but catalog has "
                                + std::to_string(catalog.size()) + " items");
            auto recall = std::optional<RecallTable> {};
            if (!ro_recall.empty())
                recall = load_recall(ro_recall, catalog);
            auto const pol = policy(ro_policy, config);
            auto const agents = users(ro_users, config, catalog);
            auto const env = EpisodeEnv { catalog, *index.grounder, recall ? &*recall : nullptr };

            auto const batch = run_rollouts(sequences, *pol, *agents, env, config.rollout);
            write_trajectories(ro_out, batch.trajectories);
            if (batch.groups_dropped > 0)
                err << "warning: dropped " << batch.groups_dropped << " group(s) after repeated aborts\n";

            for (auto const& p: { ro_split, ro_catalog, ro_index })
                manifest.add_input(p);
            if (!ro_recall.empty())
                manifest.add_input(ro_recall);
            if (ro_policy.starts_with("scripted:"))
                manifest.add_input(ro_policy.substr(9));
            manifest.add_output(ro_out);
            manifest.add_count("trajectories", batch.trajectories.size());
            manifest.add_count("groups_dropped", batch.groups_dropped);
            manifest.add_count("aborted_attempts", batch.aborted_attempts);
            manifest.write(manifest_path(ro_out));
            out << "wrote " << batch.trajectories.size() << " trajectories\n";
            if (batch.trajectories.empty() && batch.groups_dropped > 0)
                return exit_remote;
        }
        else if (*score_cmd)
        {
            auto const config = load(common);
            auto manifest = RunManifest("score", argv_copy);
            manifest.set_config(to_json(config));
            manifest.set_seed(config.seed);
            auto const trajectories = read_trajectories(sc_traj);
            auto const logprobs = read_logprobs(sc_logprobs);
            auto const targets = targets_of(read_sequences(sc_split));
            auto const index = Index(sc_index, config);
            auto const scored =
                score_groups(trajectories, logprobs, targets, *index.grounder, config.reward, config.rollout.group_size);
            for (auto const& w: scored.warnings)
                err << "warning: " << w << "\n";
            write_scored(sc_out, scored.rows);
            for (auto const& p: { sc_traj, sc_logprobs, sc_split, sc_index })
                manifest.add_input(p);
            manifest.add_output(sc_out);
            manifest.add_count("scored", scored.rows.size());
            manifest.add_count("groups_skipped", scored.groups_skipped);
            manifest.write(manifest_path(sc_out));
            out << "scored " << scored.rows.size() << " episodes\n";
        }
        else if (*eval_cmd)
        {
            auto const config = load(common);
            auto manifest = RunManifest("evaluate", argv_copy);
            manifest.set_config(to_json(config));
            manifest.set_seed(config.seed);
            auto const trajectories = read_trajectories(ev_traj);
            auto const targets = targets_of(read_sequences(ev_targets));
            auto const index = Index(ev_index, config);
            auto const report = evaluate(trajectories, *index.grounder, targets, config.evaluation.cutoffs);
            auto doc = to_json(report);
            doc["config"] = to_json(config);
            write_json(ev_out, doc);
            for (auto const& p: { ev_traj, ev_targets, ev_index })
                manifest.add_input(p);
            manifest.add_output(ev_out);
            manifest.write(manifest_path(ev_out));
            for (auto const& m: report.metrics)
                out << "HR@" << m.k << " " << m.hit_ratio << "  NDCG@" << m.k << " " << m.ndcg << "\n";
        }
        else if (*difficulty_cmd)
        {
            auto const config = load(common);
            auto manifest = RunManifest("analyze difficulty", argv_copy);
            manifest.set_config(to_json(config));
            auto const trajectories = read_trajectories(an_traj);
            auto const train = read_sequences(an_train);
            auto const targets = targets_of(read_sequences(an_targets));
            auto const report = analyze_difficulty(trajectories, popularity(train), targets);
            write_json(an_out, to_json(report));
            for (auto const& p: { an_traj, an_train, an_targets })
                manifest.add_input(p);
            manifest.add_output(an_out);
            manifest.write(manifest_path(an_out));
            out << to_json(report).dump() << "\n";
        }
        else if (*cap_cmd)
        {
            auto config = load(common);
            if (!cap_list.empty())
                config.evaluation.caps = cap_list;
            check_agent_specs(cap_policy, cap_users);
            resolve_paths(config, cap_catalog, cap_index, cap_recall);
            auto manifest = RunManifest("analyze rank-vs-cap", argv_copy);
            manifest.set_config(to_json(config));
            manifest.set_seed(config.seed);
            auto const catalog = load_catalog(cap_catalog);
            auto const sequences = read_sequences(cap_split, &catalog);
            auto const index = Index(cap_index, config);
            auto recall = std::optional<RecallTable> {};
            if (!cap_recall.empty())
                recall = load_recall(cap_recall, catalog);
            auto const pol = policy(cap_policy, config);
            auto const agents = users(cap_users, config, catalog);
            auto const env = EpisodeEnv { catalog, *index.grounder, recall ? &*recall : nullptr };
            auto const report = analyze_rank_vs_cap(sequences, *pol, *agents, env, config.rollout,
                                                    config.evaluation.caps, config.evaluation.rank_ceiling);
            write_json(cap_out, to_json(report));
            for (auto const& p: { cap_split, cap_catalog, cap_index })
                manifest.add_input(p);
            manifest.add_output(cap_out);
            manifest.write(manifest_path(cap_out));
            out << to_json(report).dump() << "\n";
        }
        else if (*verify_cmd)
        {
            auto const problems = verify_manifest(mv_path);
            for (auto const& p: problems)
                err << p << "\n";
            if (!problems.empty())
                return exit_data;
            out << "manifest verified\n";
        }
    }
    catch (UsageError const& e)
    {
        err << "usage error: " << e.what() << "\n";
        return exit_usage;
    }
    catch (RemoteError const& e)
    {
        err << "remote error: " << e.what() << "\n";
        return exit_remote;
    }
    catch (BatchError const& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_remote;
    }
    catch (BuildInterrupted const& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_remote;
    }
    catch (std::exception const& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_data;
    }
    return exit_ok;
}

} // namespace groundrec::cli
