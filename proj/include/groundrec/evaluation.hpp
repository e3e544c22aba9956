// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/agents.hpp>
#include <groundrec/catalog.hpp>
#include <groundrec/grounding.hpp>
#include <groundrec/jsonl.hpp>
#include <groundrec/reward.hpp>
#include <groundrec/rollout.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace groundrec
{

inline const auto default_cutoffs = std::vector<std::size_t> { 5, 10, 20 };

struct CutoffMetrics
{
    std::size_t k = 0;
    double hit_ratio = 0.0;
    double ndcg = 0.0;
};

struct RankedSample
{
    std::string episode_id;
    UserId user_id {};
    std::optional<std::size_t> rank; ///< absent = miss at every cutoff
};

struct EvalReport
{
    std::vector<CutoffMetrics> metrics;
    std::size_t samples = 0;
    std::size_t misses = 0; ///< FormatInvalid or Aborted episodes
    std::vector<RankedSample> ranks;
};

/// HR@K and NDCG@K with one relevant item per sample; absent ranks count as misses.
inline auto ranking_metrics(std::span<std::optional<std::size_t> const> ranks, std::span<std::size_t const> cutoffs)
    -> std::vector<CutoffMetrics>
{
    if (ranks.empty())
        throw DataError("cannot compute metrics over zero samples");
    auto out = std::vector<CutoffMetrics> {};
    for (auto k: cutoffs)
    {
        auto hits = 0.0;
        auto gain = 0.0;
        for (auto const& r: ranks)
        {
            if (!r || *r > k)
                continue;
            hits += 1.0;
            gain += rank_reward(*r);
        }
        auto const n = static_cast<double>(ranks.size());
        out.push_back(CutoffMetrics { k, hits / n, gain / n });
    }
    return out;
}

/// Full-ranking evaluation of final answers against held-out targets.
inline auto evaluate(std::span<Trajectory const> trajectories,
                     Grounder const& grounder,
                     std::map<UserId, ItemId> const& targets,
                     std::span<std::size_t const> cutoffs = default_cutoffs) -> EvalReport
{
    auto report = EvalReport {};
    auto ranks = std::vector<std::optional<std::size_t>> {};
    for (auto const& t: trajectories)
    {
        auto const target = targets.find(t.user_id);
        if (target == targets.end())
            throw DataError("no target for user " + std::to_string(t.user_id));
        auto sample = RankedSample { t.episode_id, t.user_id, std::nullopt };
        if (is_format_valid(t))
            sample.rank = grounder.rank_of(*t.answer_title, target->second);
        else
            ++report.misses;
        ranks.push_back(sample.rank);
        report.ranks.push_back(std::move(sample));
    }
    report.samples = trajectories.size();
    report.metrics = ranking_metrics(ranks, cutoffs);
    return report;
}

inline auto metric_name(std::string_view metric, std::size_t k) -> std::string
{
    return std::string(metric) + "@" + std::to_string(k);
}

inline auto to_json(EvalReport const& report) -> ordered_json
{
    auto doc = ordered_json::object();
    auto metrics = ordered_json::object();
    for (auto const& m: report.metrics)
    {
        metrics[metric_name("HR", m.k)] = m.hit_ratio;
        metrics[metric_name("NDCG", m.k)] = m.ndcg;
    }
    doc["metrics"] = std::move(metrics);
    doc["samples"] = report.samples;
    doc["misses"] = report.misses;
    auto ranks = ordered_json::array();
    for (auto const& r: report.ranks)
    {
        auto row = ordered_json::object();
        row["episode_id"] = r.episode_id;
        row["user_id"] = r.user_id;
        row["rank"] = r.rank ? ordered_json(*r.rank) : ordered_json(nullptr);
        ranks.push_back(std::move(row));
    }
    doc["ranks"] = std::move(ranks);
    return doc;
}

// ---------------------------------------------------------------------------
// Grounding-frequency vs. difficulty

struct GroundingBin
{
    std::string label;
    std::size_t lo = 0; ///< inclusive
    std::size_t hi = 0; ///< inclusive
};

inline const auto default_grounding_bins = std::vector<GroundingBin> {
    { "low", 0, 1 },
    { "medium", 2, 4 },
    { "high", 5, 6 },
};

struct BinSummary
{
    std::string label;
    std::size_t lo = 0;
    std::size_t hi = 0;
    std::size_t samples = 0;                ///< finite-difficulty samples averaged
    std::size_t unseen_excluded = 0;        ///< samples whose target never occurs in training
    std::optional<double> mean_difficulty;  ///< absent when no finite sample fell in the bin
};

struct DifficultyReport
{
    std::vector<BinSummary> bins;
    std::size_t unbinned = 0; ///< grounding counts outside every bin
};

/// Mean target difficulty (1 / training popularity) per grounding-count bin.
inline auto analyze_difficulty(std::span<Trajectory const> trajectories,
                               PopularityTable const& popularity,
                               std::map<UserId, ItemId> const& targets,
                               std::span<GroundingBin const> bins = default_grounding_bins) -> DifficultyReport
{
    auto report = DifficultyReport {};
    auto sums = std::vector<double>(bins.size(), 0.0);
    for (auto const& b: bins)
        report.bins.push_back(BinSummary { b.label, b.lo, b.hi, 0, 0, std::nullopt });

    for (auto const& t: trajectories)
    {
        if (t.status == EpisodeStatus::Aborted)
            continue;
        auto const target = targets.find(t.user_id);
        if (target == targets.end())
            throw DataError("no target for user " + std::to_string(t.user_id));
        auto const bin = std::find_if(bins.begin(), bins.end(), [&](auto const& b) {
            return b.lo <= t.grounding_count && t.grounding_count <= b.hi;
        });
        if (bin == bins.end())
        {
            ++report.unbinned;
            continue;
        }
        auto const i = static_cast<std::size_t>(bin - bins.begin());
        auto const difficulty = popularity.difficulty(target->second);
        if (std::isinf(difficulty))
        {
            ++report.bins[i].unseen_excluded;
            continue;
        }
        sums[i] += difficulty;
        ++report.bins[i].samples;
    }
    for (auto i = std::size_t { 0 }; i < bins.size(); ++i)
        if (report.bins[i].samples > 0)
            report.bins[i].mean_difficulty = sums[i] / static_cast<double>(report.bins[i].samples);
    return report;
}

inline auto to_json(DifficultyReport const& report) -> ordered_json
{
    auto doc = ordered_json::object();
    auto bins = ordered_json::array();
    for (auto const& b: report.bins)
    {
        auto row = ordered_json::object();
        row["label"] = b.label;
        row["range"] = { b.lo, b.hi };
        row["samples"] = b.samples;
        row["unseen_excluded"] = b.unseen_excluded;
        row["mean_difficulty"] = b.mean_difficulty ? ordered_json(*b.mean_difficulty) : ordered_json(nullptr);
        bins.push_back(std::move(row));
    }
    doc["bins"] = std::move(bins);
    doc["unbinned"] = report.unbinned;
    return doc;
}

// ---------------------------------------------------------------------------
// Grounding cap vs. target rank

inline constexpr std::size_t default_rank_ceiling = 4096;

struct CapSummary
{
    std::size_t cap = 0;
    std::size_t samples = 0;          ///< samples whose rank is within the ceiling
    std::size_t above_ceiling = 0;
    std::size_t without_grounding = 0; ///< episodes that never executed a grounding
    std::optional<double> mean_rank;
};

struct CapReport
{
    std::size_t rank_ceiling = default_rank_ceiling;
    std::vector<CapSummary> caps;
};

/// Reruns one episode per sequence under each grounding cap and averages the target's
/// rank against the last executed grounding title.
inline auto analyze_rank_vs_cap(std::span<InteractionSequence const> sequences,
                                Policy const& policy,
                                UserAgentFactory const& users,
                                EpisodeEnv const& env,
                                RolloutConfig base,
                                std::span<std::size_t const> caps,
                                std::size_t rank_ceiling = default_rank_ceiling) -> CapReport
{
    if (!std::is_sorted(caps.begin(), caps.end()))
        throw UsageError("grounding caps must be sorted ascending");
    auto report = CapReport { rank_ceiling, {} };
    for (auto cap: caps)
    {
        auto config = base;
        config.max_groundings = cap;
        if (!base.max_turns || *base.max_turns <= cap)
            config.max_turns = cap + 2;

        auto summary = CapSummary { .cap = cap, .mean_rank = std::nullopt };
        auto sum = 0.0;
        for (auto const& seq: sequences)
        {
            auto const agent = users.make(seq);
            auto const traj = run_episode(seq, episode_id_for(seq.user_id, 0), policy, *agent, env, config);
            auto const grounded = executed_groundings(traj);
            if (grounded.empty())
            {
                ++summary.without_grounding;
                continue;
            }
            auto const rank = env.grounder.rank_of(grounded.back(), seq.target);
            if (rank > rank_ceiling)
            {
                ++summary.above_ceiling;
                continue;
            }
            sum += static_cast<double>(rank);
            ++summary.samples;
        }
        if (summary.samples > 0)
            summary.mean_rank = sum / static_cast<double>(summary.samples);
        report.caps.push_back(summary);
    }
    return report;
}

inline auto to_json(CapReport const& report) -> ordered_json
{
    auto doc = ordered_json::object();
    doc["rank_ceiling"] = report.rank_ceiling;
    auto caps = ordered_json::array();
    for (auto const& c: report.caps)
    {
        auto row = ordered_json::object();
        row["cap"] = c.cap;
        row["samples"] = c.samples;
        row["above_ceiling"] = c.above_ceiling;
        row["without_grounding"] = c.without_grounding;
        row["mean_rank"] = c.mean_rank ? ordered_json(*c.mean_rank) : ordered_json(nullptr);
        caps.push_back(std::move(row));
    }
    doc["caps"] = std::move(caps);
    return doc;
}

} // namespace groundrec
