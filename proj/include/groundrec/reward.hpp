// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/catalog.hpp>
#include <groundrec/grounding.hpp>
#include <groundrec/jsonl.hpp>
#include <groundrec/rollout.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace groundrec
{

/// Reward assigned to any transcript that breaks the response template.
inline constexpr double format_penalty = -0.5;

/// Single-relevant-item NDCG: 1 / log2(1 + rank).
inline auto rank_reward(std::size_t rank) -> double
{
    if (rank == 0)
        throw UsageError("ranks are 1-based");
    return 1.0 / std::log2(1.0 + static_cast<double>(rank));
}

struct RewardRecord
{
    std::optional<std::size_t> rank;
    bool format_valid = false;
    double recommendation = 0.0; ///< R_rec; 0 when the format is invalid
    double value = format_penalty;
};

inline auto is_format_valid(Trajectory const& traj) -> bool
{
    return traj.status == EpisodeStatus::Completed && traj.answer_title.has_value() && traj.verdict.valid();
}

/// Format-gated reward for one finished episode. Aborted episodes must not be scored.
inline auto reward(Trajectory const& traj, Grounder const& grounder, ItemId target) -> RewardRecord
{
    if (traj.status == EpisodeStatus::Aborted)
        throw UsageError("aborted episode " + traj.episode_id + " cannot be scored");
    if (!is_format_valid(traj))
        return RewardRecord {};
    auto const rank = grounder.rank_of(*traj.answer_title, target);
    auto const r = rank_reward(rank);
    return RewardRecord { .rank = rank, .format_valid = true, .recommendation = r, .value = r };
}

inline constexpr double advantage_std_guard = 1e-8;

struct GroupScore
{
    std::vector<double> rewards;
    std::vector<double> advantages;
    bool degenerate = false; ///< all rewards equal; advantages are all zero
};

/// Group-relative advantages: (R - mean) / (population std + 1e-8).
inline auto advantages(std::span<double const> rewards) -> GroupScore
{
    if (rewards.size() < 2)
        throw UsageError("a reward group needs at least 2 members");
    auto out = GroupScore { .rewards = { rewards.begin(), rewards.end() }, .advantages = {}, .degenerate = false };
    auto const n = static_cast<double>(rewards.size());

    auto sum = 0.0;
    for (auto r: rewards)
        sum += r;
    auto const mean = sum / n;

    out.degenerate = std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
    if (out.degenerate)
    {
        out.advantages.assign(rewards.size(), 0.0);
        return out;
    }

    auto sq = 0.0;
    for (auto r: rewards)
        sq += (r - mean) * (r - mean);
    auto const stddev = std::sqrt(sq / n);

    out.advantages.reserve(rewards.size());
    for (auto r: rewards)
        out.advantages.push_back((r - mean) / (stddev + advantage_std_guard));
    return out;
}

// ---------------------------------------------------------------------------
// Masked clipped policy loss

struct TokenScores
{
    std::vector<std::int64_t> token_ids;
    std::vector<double> logp_theta;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::vector<std::uint8_t> mask; ///< 1 = policy-generated, contributes to the loss
};

enum class LossAggregation
{
    TokenMean,   ///< mean over mask-true tokens
    SequenceSum, ///< sum over mask-true tokens
};

struct GrpoHyper
{
    double clip_eps = 0.2;
    double kl_beta = 1e-3;
    LossAggregation aggregation = LossAggregation::TokenMean;

    void validate() const
    {
        if (!(clip_eps > 0.0) || !std::isfinite(clip_eps))
            throw UsageError("clip epsilon must be positive and finite");
        if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta))
            throw UsageError("KL weight must be non-negative and finite");
    }
};

struct LossResult
{
    double loss = 0.0;
    double mean_ratio = 0.0;
    double clip_fraction = 0.0; ///< share of tokens where the clipped branch is the minimum
    double mean_kl = 0.0;
    std::size_t tokens = 0; ///< mask-true tokens
};

/// k3 estimator of KL(theta || ref) at one token; non-negative for finite inputs.
inline auto kl_k3(double logp_theta, double logp_ref) -> double
{
    auto const log_ratio = logp_ref - logp_theta;
    return std::exp(log_ratio) - log_ratio - 1.0;
}

/// Negated clipped surrogate minus the KL penalty, over mask-true tokens only. The same
/// sequence-level advantage applies to every token.
inline auto masked_grpo_loss(TokenScores const& scores, double advantage, GrpoHyper const& hyper) -> LossResult
{
    hyper.validate();
    auto const n = scores.mask.size();
    if (scores.logp_theta.size() != n || scores.logp_old.size() != n || scores.logp_ref.size() != n
        || (!scores.token_ids.empty() && scores.token_ids.size() != n))
        throw DataError("token score arrays have different lengths");
    if (!std::isfinite(advantage))
        throw DataError("advantage is not finite");
    for (auto i = std::size_t { 0 }; i < n; ++i)
        if (!std::isfinite(scores.logp_theta[i]) || !std::isfinite(scores.logp_old[i])
            || !std::isfinite(scores.logp_ref[i]))
            throw DataError("non-finite log-probability at token " + std::to_string(i));

    auto out = LossResult {};
    auto objective = 0.0;
    auto ratio_sum = 0.0;
    auto kl_sum = 0.0;
    auto clipped = std::size_t { 0 };
    for (auto i = std::size_t { 0 }; i < n; ++i)
    {
        if (scores.mask[i] == 0)
            continue;
        auto const ratio = std::exp(scores.logp_theta[i] - scores.logp_old[i]);
        auto const unclipped = ratio * advantage;
        auto const bounded = std::clamp(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * advantage;
        auto const surrogate = std::min(unclipped, bounded);
        auto const kl = kl_k3(scores.logp_theta[i], scores.logp_ref[i]);
        objective += surrogate - hyper.kl_beta * kl;
        ratio_sum += ratio;
        kl_sum += kl;
        if (bounded < unclipped)
            ++clipped;
        ++out.tokens;
    }
    if (out.tokens == 0)
        throw DataError("no mask-true tokens");

    auto const count = static_cast<double>(out.tokens);
    out.loss = hyper.aggregation == LossAggregation::TokenMean ? -objective / count : -objective;
    out.mean_ratio = ratio_sum / count;
    out.mean_kl = kl_sum / count;
    out.clip_fraction = static_cast<double>(clipped) / count;
    return out;
}

/// Token mask from token character offsets into the response transcript: a token is
/// trainable iff it lies entirely inside one policy-generated segment.
inline auto mask_from_offsets(std::span<Segment const> segments, std::span<Span const> token_offsets)
    -> std::vector<std::uint8_t>
{
    auto mask = std::vector<std::uint8_t>(token_offsets.size(), 0);
    for (auto t = std::size_t { 0 }; t < token_offsets.size(); ++t)
    {
        auto const& tok = token_offsets[t];
        auto const it = std::upper_bound(segments.begin(), segments.end(), tok.begin,
                                         [](std::size_t pos, Segment const& s) { return pos < s.span.end; });
        if (it != segments.end() && is_trainable(it->source) && it->span.begin <= tok.begin
            && tok.end <= it->span.end)
            mask[t] = 1;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Batch scoring

struct LogprobRecord
{
    std::string episode_id;
    TokenScores scores;
};

inline auto read_logprobs(std::filesystem::path const& path) -> std::map<std::string, TokenScores>
{
    auto out = std::map<std::string, TokenScores> {};
    for_each_jsonl(path, [&](std::size_t line, json const& row) {
        auto id = row.at("episode_id").get<std::string>();
        auto scores = TokenScores {
            .token_ids = row.at("token_ids").get<std::vector<std::int64_t>>(),
            .logp_theta = row.at("logp_theta").get<std::vector<double>>(),
            .logp_old = row.at("logp_old").get<std::vector<double>>(),
            .logp_ref = row.at("logp_ref").get<std::vector<double>>(),
            .mask = row.at("mask").get<std::vector<std::uint8_t>>(),
        };
        auto const n = scores.token_ids.size();
        if (scores.logp_theta.size() != n || scores.logp_old.size() != n || scores.logp_ref.size() != n
            || scores.mask.size() != n)
            throw DataError(path.string() + ":" + std::to_string(line) + ": array length mismatch for episode "
                            + id);
        for (auto m: scores.mask)
            if (m > 1)
                throw DataError(path.string() + ":" + std::to_string(line) + ": mask values must be 0 or 1");
        if (!out.emplace(id, std::move(scores)).second)
            throw DataError(path.string() + ":" + std::to_string(line) + ": duplicate episode_id " + id);
    });
    return out;
}

inline void write_logprobs(std::filesystem::path const& path, std::span<LogprobRecord const> records)
{
    auto rows = std::vector<ordered_json> {};
    for (auto const& r: records)
    {
        auto row = ordered_json::object();
        row["episode_id"] = r.episode_id;
        row["token_ids"] = r.scores.token_ids;
        row["logp_theta"] = r.scores.logp_theta;
        row["logp_old"] = r.scores.logp_old;
        row["logp_ref"] = r.scores.logp_ref;
        row["mask"] = r.scores.mask;
        rows.push_back(std::move(row));
    }
    write_jsonl(path, rows);
}

struct ScoredEpisode
{
    std::string episode_id;
    double reward = 0.0;
    double advantage = 0.0;
    double loss = 0.0;
    double clip_fraction = 0.0;
    double kl = 0.0;
};

struct ScoreOutcome
{
    std::vector<ScoredEpisode> rows; ///< ordered by episode_id
    std::size_t groups_skipped = 0;
    std::vector<std::string> warnings;
};

/// Scores whole groups (trajectories of the same user). Groups that are incomplete,
/// contain aborted episodes, or miss log-probabilities are skipped with a warning.
inline auto score_groups(std::span<Trajectory const> trajectories,
                         std::map<std::string, TokenScores> const& logprobs,
                         std::map<UserId, ItemId> const& targets,
                         Grounder const& grounder,
                         GrpoHyper const& hyper,
                         std::size_t group_size) -> ScoreOutcome
{
    hyper.validate();
    auto groups = std::map<UserId, std::vector<Trajectory const*>> {};
    for (auto const& t: trajectories)
        groups[t.user_id].push_back(&t);

    auto out = ScoreOutcome {};
    for (auto& [user, members]: groups)
    {
        std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->episode_id < b->episode_id; });
        auto const skip = [&](std::string const& why) {
            ++out.groups_skipped;
            out.warnings.push_back("group for user " + std::to_string(user) + " skipped: " + why);
        };

        if (members.size() != group_size)
        {
            skip("has " + std::to_string(members.size()) + " members, expected " + std::to_string(group_size));
            continue;
        }
        if (std::any_of(members.begin(), members.end(), [](auto* t) { return t->status == EpisodeStatus::Aborted; }))
        {
            skip("contains an aborted episode");
            continue;
        }
        auto const missing = std::find_if(members.begin(), members.end(),
                                          [&](auto* t) { return !logprobs.contains(t->episode_id); });
        if (missing != members.end())
        {
            skip("no log-probabilities for episode " + (*missing)->episode_id);
            continue;
        }
        auto const target = targets.find(user);
        if (target == targets.end())
            throw DataError("no target for user " + std::to_string(user));

        auto rewards = std::vector<double> {};
        for (auto* t: members)
            rewards.push_back(reward(*t, grounder, target->second).value);
        auto const group = advantages(rewards);

        for (auto i = std::size_t { 0 }; i < members.size(); ++i)
        {
            auto loss = LossResult {};
            try
            {
                loss = masked_grpo_loss(logprobs.at(members[i]->episode_id), group.advantages[i], hyper);
            }
            catch (DataError const& e)
            {
                throw DataError("episode " + members[i]->episode_id + ": " + e.what());
            }
            out.rows.push_back(ScoredEpisode {
                .episode_id = members[i]->episode_id,
                .reward = rewards[i],
                .advantage = group.advantages[i],
                .loss = loss.loss,
                .clip_fraction = loss.clip_fraction,
                .kl = loss.mean_kl,
            });
        }
    }
    std::sort(out.rows.begin(), out.rows.end(), [](auto const& a, auto const& b) { return a.episode_id < b.episode_id; });
    return out;
}

/// Group loss: mean of the per-trajectory losses.
inline auto group_loss(std::span<ScoredEpisode const> members) -> double
{
    if (members.empty())
        throw UsageError("empty group");
    auto sum = 0.0;
    for (auto const& m: members)
        sum += m.loss;
    return sum / static_cast<double>(members.size());
}

inline void write_scored(std::filesystem::path const& path, std::span<ScoredEpisode const> rows)
{
    auto out = std::vector<ordered_json> {};
    for (auto const& r: rows)
    {
        auto row = ordered_json::object();
        row["episode_id"] = r.episode_id;
        row["reward"] = r.reward;
        row["advantage"] = r.advantage;
        row["loss"] = r.loss;
        row["clip_frac"] = r.clip_fraction;
        row["kl"] = r.kl;
        out.push_back(std::move(row));
    }
    write_jsonl(path, out);
}

inline auto targets_of(std::span<InteractionSequence const> sequences) -> std::map<UserId, ItemId>
{
    auto out = std::map<UserId, ItemId> {};
    for (auto const& s: sequences)
        out[s.user_id] = s.target;
    return out;
}

} // namespace groundrec
