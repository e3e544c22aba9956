// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/agents.hpp>
#include <groundrec/catalog.hpp>
#include <groundrec/grammar.hpp>
#include <groundrec/grounding.hpp>
#include <groundrec/jsonl.hpp>
#include <groundrec/prompts.hpp>
#include <groundrec/transcript.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace groundrec
{

struct RolloutConfig
{
    std::size_t max_groundings = 6;
    std::size_t k_per_ground = 10;
    std::size_t recall_size = 30;
    std::size_t group_size = 6;
    std::optional<std::size_t> max_turns; ///< defaults to max_groundings + 2
    std::size_t parallelism = 1;
    std::size_t abort_retries = 2;

    [[nodiscard]] auto turn_cap() const -> std::size_t { return max_turns.value_or(max_groundings + 2); }

    void validate() const
    {
        if (max_groundings == 0 || k_per_ground == 0 || recall_size == 0 || group_size == 0 || parallelism == 0)
            throw UsageError("rollout settings must be positive");
        if (turn_cap() <= max_groundings)
            throw UsageError("max_turns must exceed max_groundings");
    }
};

enum class EpisodeStatus
{
    Completed,
    FormatInvalid,
    Aborted,
};

inline auto to_string(EpisodeStatus s) -> std::string_view
{
    switch (s)
    {
        case EpisodeStatus::Completed: return "Completed";
        case EpisodeStatus::FormatInvalid: return "FormatInvalid";
        case EpisodeStatus::Aborted: return "Aborted";
    }
    return "?";
}

inline auto episode_status_from_string(std::string_view s) -> EpisodeStatus
{
    for (auto v: { EpisodeStatus::Completed, EpisodeStatus::FormatInvalid, EpisodeStatus::Aborted })
        if (to_string(v) == s)
            return v;
    throw DataError("unknown episode status \"" + std::string(s) + "\"");
}

struct Trajectory
{
    std::string episode_id;
    UserId user_id {};
    std::string prompt;
    std::vector<Segment> segments;
    std::size_t grounding_count = 0;
    std::optional<std::string> answer_title;
    EpisodeStatus status = EpisodeStatus::FormatInvalid;

    // not serialized
    FormatVerdict verdict;
    std::string abort_reason;

    [[nodiscard]] auto response_text() const -> std::string
    {
        auto out = std::string {};
        for (auto const& s: segments)
            out += s.text;
        return out;
    }
};

/// Titles of groundings that were actually executed (refused grounds excluded), in order.
inline auto executed_groundings(Trajectory const& traj) -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    for (auto i = std::size_t { 0 }; i + 1 < traj.segments.size(); ++i)
    {
        if (traj.segments[i].source != SegmentSource::PolicyGenerated
            || traj.segments[i + 1].source != SegmentSource::ItemListInjected)
            continue;
        auto const turn = parse_turn(traj.segments[i].text);
        if (turn.verdict.valid() && !turn.actions.empty() && turn.actions.back().kind == ActionKind::Ground)
            out.push_back(turn.actions.back().text);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Initial recall

using RecallTable = std::map<UserId, std::vector<ItemId>>;

/// JSON-lines: {"user_id": int, "items": [int]}
inline auto load_recall(std::filesystem::path const& path, ItemCatalog const& catalog) -> RecallTable
{
    auto table = RecallTable {};
    for_each_jsonl(path, [&](std::size_t line, json const& row) {
        auto items = row.at("items").get<std::vector<ItemId>>();
        for (auto id: items)
            if (!catalog.contains(id))
                throw DataError(path.string() + ":" + std::to_string(line) + ": unknown item_id "
                                + std::to_string(id));
        table[row.at("user_id").get<UserId>()] = std::move(items);
    });
    return table;
}

/// Items closest to the mean history embedding, excluding history items and `skip`.
inline auto embedding_recall(InteractionSequence const& seq,
                             EmbeddingStore const& store,
                             std::size_t count,
                             std::set<ItemId> const& skip = {}) -> std::vector<ItemId>
{
    if (store.empty())
        throw DataError("initial recall fallback needs a non-empty embedding store");
    auto const dim = store.dimension();
    auto mean = std::vector<double>(dim, 0.0);
    for (auto id: seq.history)
    {
        if (id >= store.size())
            throw DataError("history item " + std::to_string(id) + " is not in the embedding store");
        auto const row = store.row(id);
        for (auto j = std::size_t { 0 }; j < dim; ++j)
            mean[j] += row[j];
    }
    auto query = std::vector<float>(dim);
    for (auto j = std::size_t { 0 }; j < dim; ++j)
        query[j] = static_cast<float>(mean[j] / static_cast<double>(seq.history.size()));

    auto excluded = std::set<ItemId>(seq.history.begin(), seq.history.end());
    excluded.insert(skip.begin(), skip.end());
    auto ranked = nearest(store, query, std::min(store.size(), count + excluded.size()));

    auto out = std::vector<ItemId> {};
    for (auto const& hit: ranked)
    {
        if (out.size() == count)
            break;
        if (!excluded.contains(hit.item))
            out.push_back(hit.item);
    }
    return out;
}

/// The recall list shown in the prompt: the user's row from `table` when present
/// (truncated, or padded from the embedding fallback), else the embedding fallback.
inline auto initial_recall(InteractionSequence const& seq,
                           EmbeddingStore const& store,
                           RecallTable const* table,
                           std::size_t recall_size) -> std::vector<ItemId>
{
    if (seq.history.empty())
        throw DataError("initial recall needs a non-empty history");
    if (table != nullptr)
    {
        if (auto it = table->find(seq.user_id); it != table->end())
        {
            auto items = it->second;
            if (items.size() >= recall_size)
            {
                items.resize(recall_size);
                return items;
            }
            auto const present = std::set<ItemId>(items.begin(), items.end());
            for (auto id: embedding_recall(seq, store, recall_size - items.size(), present))
                items.push_back(id);
            return items;
        }
    }
    return embedding_recall(seq, store, recall_size);
}

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeEnv
{
    ItemCatalog const& catalog;
    Grounder const& grounder;
    RecallTable const* recall = nullptr;
};

inline auto titles_of(ItemCatalog const& catalog, std::span<ItemId const> ids) -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    out.reserve(ids.size());
    for (auto id: ids)
        out.push_back(catalog.title(id));
    return out;
}

/// Runs one multi-turn episode.
///
/// Each policy turn is parsed; a Ground below the cap is executed and followed by the
/// item list and the user agent's feedback. Past the cap a single notice is injected and
/// further grounds are refused. An Answer completes the episode; a grammar violation or
/// running out of turns makes it FormatInvalid; a RemoteError from the policy aborts it.
inline auto run_episode(InteractionSequence const& seq,
                        std::string const& episode_id,
                        Policy const& policy,
                        UserAgent const& user_agent,
                        EpisodeEnv const& env,
                        RolloutConfig const& config) -> Trajectory
{
    config.validate();
    auto const history_titles = titles_of(env.catalog, seq.history);
    auto const recall = initial_recall(seq, env.grounder.store(), env.recall, config.recall_size);
    auto const system_prompt = std::string(prompts::recommendation_agent);
    auto const user_message = prompts::episode_user_message(history_titles, titles_of(env.catalog, recall));

    auto traj = Trajectory {};
    traj.episode_id = episode_id;
    traj.user_id = seq.user_id;
    traj.prompt = system_prompt + "\n\n" + user_message;

    auto transcript = Transcript {};
    auto notice_sent = false;
    auto const finish = [&](EpisodeStatus status) {
        traj.status = status;
        traj.segments.assign(transcript.segments().begin(), transcript.segments().end());
        return traj;
    };

    for (auto turn = std::size_t { 0 }; turn < config.turn_cap(); ++turn)
    {
        auto text = std::string {};
        try
        {
            text = policy.turn(PolicyTurnRequest {
                .episode_id = episode_id,
                .user_id = seq.user_id,
                .system_prompt = system_prompt,
                .user_message = user_message,
                .transcript = transcript.segments(),
                .turn_index = turn,
                .max_turns = config.turn_cap(),
            });
        }
        catch (RemoteError const& e)
        {
            traj.abort_reason = e.what();
            return finish(EpisodeStatus::Aborted);
        }

        auto const offset = transcript.length();
        transcript.append(text, SegmentSource::PolicyGenerated);
        auto const parsed = parse_turn(text, offset);
        if (!parsed.verdict.valid())
        {
            traj.verdict = parsed.verdict;
            return finish(EpisodeStatus::FormatInvalid);
        }
        if (parsed.actions.empty())
            continue;

        auto const& last = parsed.actions.back();
        if (last.kind == ActionKind::Answer)
        {
            traj.answer_title = last.text;
            auto const check = transcript_entries(transcript.segments());
            traj.verdict = check.verdict;
            return finish(check.verdict.valid() ? EpisodeStatus::Completed : EpisodeStatus::FormatInvalid);
        }
        if (last.kind != ActionKind::Ground)
            continue;

        if (traj.grounding_count < config.max_groundings)
        {
            auto const result = env.grounder.ground(last.text, config.k_per_ground);
            auto const hit_ids = [&] {
                auto ids = std::vector<ItemId> {};
                for (auto const& h: result.hits)
                    ids.push_back(h.item);
                return ids;
            }();
            transcript.append(injected_block(render_item_list(result, env.catalog)),
                              SegmentSource::ItemListInjected);
            auto const feedback = user_agent.respond(FeedbackRequest {
                .history_titles = history_titles,
                .grounded_title = last.text,
                .related_items = prompts::numbered(titles_of(env.catalog, hit_ids)),
                .related_ids = hit_ids,
            });
            transcript.append(injected_block("<feedback>" + feedback.text + "</feedback>"),
                              SegmentSource::FeedbackInjected);
            ++traj.grounding_count;
        }
        else if (!notice_sent)
        {
            transcript.append(injected_block("<notice>" + std::string(prompts::grounding_limit_notice) + "</notice>"),
                              SegmentSource::NoticeInjected);
            notice_sent = true;
        }
    }

    traj.verdict = FormatVerdict::fail(Violation::NoAnswer, transcript.length());
    return finish(EpisodeStatus::FormatInvalid);
}

struct GroupOutcome
{
    std::vector<Trajectory> trajectories; ///< empty when dropped
    bool dropped = false;
    std::size_t aborted_attempts = 0;
};

inline auto episode_id_for(UserId user, std::size_t sample) -> std::string
{
    return std::to_string(user) + "-" + std::to_string(sample);
}

/// G independent episodes for one input. Aborted episodes are re-run up to
/// `abort_retries` times; if one still aborts, the whole group is dropped.
inline auto run_group(InteractionSequence const& seq,
                      Policy const& policy,
                      UserAgentFactory const& users,
                      EpisodeEnv const& env,
                      RolloutConfig const& config) -> GroupOutcome
{
    if (config.group_size < 2)
        throw UsageError("group size must be at least 2");
    auto out = GroupOutcome {};
    for (auto i = std::size_t { 0 }; i < config.group_size; ++i)
    {
        auto completed = false;
        for (auto attempt = std::size_t { 0 }; attempt <= config.abort_retries; ++attempt)
        {
            auto const agent = users.make(seq);
            auto traj = run_episode(seq, episode_id_for(seq.user_id, i), policy, *agent, env, config);
            if (traj.status != EpisodeStatus::Aborted)
            {
                out.trajectories.push_back(std::move(traj));
                completed = true;
                break;
            }
            ++out.aborted_attempts;
        }
        if (!completed)
        {
            out.trajectories.clear();
            out.dropped = true;
            return out;
        }
    }
    return out;
}

struct RolloutBatch
{
    std::vector<Trajectory> trajectories; ///< input order, then sample index
    std::size_t groups_dropped = 0;
    std::size_t aborted_attempts = 0;
};

/// Runs one group per sequence on a pool of `config.parallelism` workers. Results are
/// collected in input order regardless of completion order.
inline auto run_rollouts(std::span<InteractionSequence const> sequences,
                         Policy const& policy,
                         UserAgentFactory const& users,
                         EpisodeEnv const& env,
                         RolloutConfig const& config) -> RolloutBatch
{
    config.validate();
    auto outcomes = std::vector<GroupOutcome>(sequences.size());
    auto next = std::atomic<std::size_t> { 0 };
    auto failure = std::exception_ptr {};
    auto failure_mutex = std::mutex {};

    auto const work = [&] {
        for (auto i = next++; i < sequences.size(); i = next++)
        {
            try
            {
                outcomes[i] = run_group(sequences[i], policy, users, env, config);
            }
            catch (...)
            {
                auto const lock = std::lock_guard(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next = sequences.size();
            }
        }
    };

    auto const workers = std::min(config.parallelism, std::max<std::size_t>(sequences.size(), 1));
    if (workers <= 1)
    {
        work();
    }
    else
    {
        auto pool = std::vector<std::thread> {};
        for (auto w = std::size_t { 0 }; w < workers; ++w)
            pool.emplace_back(work);
        for (auto& t: pool)
            t.join();
    }
    if (failure)
        std::rethrow_exception(failure);

    auto batch = RolloutBatch {};
    for (auto& outcome: outcomes)
    {
        batch.aborted_attempts += outcome.aborted_attempts;
        if (outcome.dropped)
            ++batch.groups_dropped;
        for (auto& t: outcome.trajectories)
            batch.trajectories.push_back(std::move(t));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Trajectory files

inline auto to_json(Trajectory const& traj) -> ordered_json
{
    auto row = ordered_json::object();
    row["episode_id"] = traj.episode_id;
    row["user_id"] = traj.user_id;
    row["prompt"] = traj.prompt;
    row["segments"] = ordered_json::array();
    for (auto const& s: traj.segments)
    {
        auto seg = ordered_json::object();
        seg["text"] = s.text;
        seg["source"] = to_string(s.source);
        row["segments"].push_back(std::move(seg));
    }
    row["grounding_count"] = traj.grounding_count;
    row["answer_title"] = traj.answer_title ? ordered_json(*traj.answer_title) : ordered_json(nullptr);
    row["status"] = to_string(traj.status);
    return row;
}

inline auto trajectory_from_json(json const& row) -> Trajectory
{
    auto traj = Trajectory {};
    traj.episode_id = row.at("episode_id").get<std::string>();
    traj.user_id = row.at("user_id").get<UserId>();
    traj.prompt = row.at("prompt").get<std::string>();
    auto transcript = Transcript {};
    for (auto const& seg: row.at("segments"))
        transcript.append(seg.at("text").get<std::string>(),
                          segment_source_from_string(seg.at("source").get<std::string>()));
    traj.segments.assign(transcript.segments().begin(), transcript.segments().end());
    traj.grounding_count = row.at("grounding_count").get<std::size_t>();
    if (!row.at("answer_title").is_null())
        traj.answer_title = row.at("answer_title").get<std::string>();
    traj.status = episode_status_from_string(row.at("status").get<std::string>());
    if (traj.status == EpisodeStatus::Completed)
        traj.verdict = transcript_entries(traj.segments).verdict;
    return traj;
}

inline void write_trajectories(std::filesystem::path const& path, std::span<Trajectory const> trajectories)
{
    auto rows = std::vector<ordered_json> {};
    rows.reserve(trajectories.size());
    for (auto const& t: trajectories)
        rows.push_back(to_json(t));
    write_jsonl(path, rows);
}

inline auto read_trajectories(std::filesystem::path const& path) -> std::vector<Trajectory>
{
    auto out = std::vector<Trajectory> {};
    for_each_jsonl(path, [&](std::size_t, json const& row) { out.push_back(trajectory_from_json(row)); });
    return out;
}

} // namespace groundrec
