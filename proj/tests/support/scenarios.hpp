// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/agents.hpp>
#include <groundrec/catalog.hpp>
#include <groundrec/embedder.hpp>
#include <groundrec/grounding.hpp>
#include <groundrec/rollout.hpp>
#include <groundrec/vector_store.hpp>

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace fixtures
{

/// Items "Item 00".."Item NN" placed at (i, 0) in 2-D, plus named query points.
struct LineWorld
{
    groundrec::ItemCatalog catalog;
    groundrec::TableEmbedder embedder;
    groundrec::EmbeddingStore store;
    std::unique_ptr<groundrec::Grounder> grounder;

    LineWorld(std::size_t n, std::map<std::string, std::pair<float, float>> const& queries):
        catalog(items(n)), embedder(2, table(n, queries)), store(groundrec::build_index(catalog, embedder)),
        grounder(std::make_unique<groundrec::Grounder>(store, embedder))
    {
    }

    LineWorld(LineWorld const&) = delete;
    auto operator=(LineWorld const&) -> LineWorld& = delete;

    auto env() const -> groundrec::EpisodeEnv { return groundrec::EpisodeEnv { catalog, *grounder, nullptr }; }

    static auto title(std::size_t i) -> std::string
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "Item %02zu", i);
        return buf;
    }

    static auto items(std::size_t n) -> std::vector<groundrec::Item>
    {
        auto out = std::vector<groundrec::Item> {};
        for (auto i = std::size_t { 0 }; i < n; ++i)
            out.push_back({ static_cast<groundrec::ItemId>(i), title(i) });
        return out;
    }

    static auto table(std::size_t n, std::map<std::string, std::pair<float, float>> const& queries)
        -> std::map<std::string, groundrec::Embedding, std::less<>>
    {
        auto out = std::map<std::string, groundrec::Embedding, std::less<>> {};
        for (auto i = std::size_t { 0 }; i < n; ++i)
            out[title(i)] = { static_cast<float>(i), 0.0F };
        for (auto const& [text, xy]: queries)
            out[text] = { xy.first, xy.second };
        return out;
    }
};

/// Two groundings: the first lands far from the target, the second on it.
/// 20 items, user history [3, 4], target 15, three hits per grounding, recall of three.
struct TwoGroundScenario
{
    LineWorld world { 20, { { "Low Query", { 0.0F, 0.0F } }, { "High Query", { 15.0F, 0.0F } } } };
    groundrec::InteractionSequence seq { 1, { 3, 4 }, 15 };
    std::vector<std::string> turns {
        "<think>The user likes items 3 and 4.</think>",
        "<think>Try the low end.</think><ground>Low Query</ground>",
        "<think>Not right; go higher.</think>",
        "<think>Try the high end.</think><ground>High Query</ground>",
        "<think>Matched.</think><answer>Item 15</answer>",
    };

    static auto config() -> groundrec::RolloutConfig
    {
        auto c = groundrec::RolloutConfig {};
        c.k_per_ground = 3;
        c.recall_size = 3;
        return c;
    }

    auto policy() const -> groundrec::ScriptedPolicy { return groundrec::ScriptedPolicy({ { "*", turns } }); }
};

/// 50 items at x = i; target item 10. "Far Query" sits at x = 49 (rank 40),
/// "Near Query" at x = 10.6 (rank 2).
struct RankCapScenario
{
    LineWorld world { 50, { { "Far Query", { 49.0F, 0.0F } }, { "Near Query", { 10.6F, 0.0F } } } };
    std::vector<groundrec::InteractionSequence> sequences { { 7, { 20, 21 }, 10 } };
    groundrec::ScriptedPolicy policy { { { "*",
                                           {
                                               "<think>Start wide.</think><ground>Far Query</ground>",
                                               "<think>Move closer.</think><ground>Near Query</ground>",
                                               "<think>Done.</think><answer>Item 11</answer>",
                                           } } } };
};

} // namespace fixtures
