// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/catalog.hpp>
#include <groundrec/error.hpp>
#include <groundrec/jsonl.hpp>
#include <groundrec/text.hpp>
#include <groundrec/transcript.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace groundrec
{

// ---------------------------------------------------------------------------
// Policy (recommendation agent)

struct PolicyTurnRequest
{
    std::string episode_id;
    UserId user_id {};
    std::string system_prompt;
    std::string user_message;
    std::span<Segment const> transcript; ///< everything after the prompt, so far
    std::size_t turn_index = 0;
    std::size_t max_turns = 0;
};

/// Produces the raw text of one policy turn: reasoning followed by at most one Ground or
/// Answer block. Remote implementations throw RemoteError when the service is unavailable.
class Policy
{
  public:
    virtual ~Policy() = default;

    [[nodiscard]] auto turn(PolicyTurnRequest const& request) const -> std::string
    {
        if (request.turn_index >= request.max_turns)
            throw UsageError("policy turn " + std::to_string(request.turn_index) + " requested at turn cap "
                             + std::to_string(request.max_turns));
        return generate(request);
    }

  protected:
    [[nodiscard]] virtual auto generate(PolicyTurnRequest const& request) const -> std::string = 0;
};

/// Replays fixture text keyed by episode id, then user id, then "*".
/// Turns past the end of a script come back empty.
class ScriptedPolicy final: public Policy
{
  public:
    using Scripts = std::map<std::string, std::vector<std::string>, std::less<>>;

    explicit ScriptedPolicy(Scripts scripts): _scripts(std::move(scripts)) {}

    /// JSON-lines: {"episode": key, "turns": [string, ...]}
    static auto load(std::filesystem::path const& path) -> ScriptedPolicy
    {
        auto scripts = Scripts {};
        for_each_jsonl(path, [&](std::size_t line, json const& row) {
            auto key = row.at("episode").get<std::string>();
            if (scripts.contains(key))
                throw DataError(path.string() + ":" + std::to_string(line) + ": duplicate script key \"" + key
                                + "\"");
            scripts.emplace(std::move(key), row.at("turns").get<std::vector<std::string>>());
        });
        return ScriptedPolicy(std::move(scripts));
    }

  protected:
    [[nodiscard]] auto generate(PolicyTurnRequest const& request) const -> std::string override
    {
        auto const& turns = script_for(request);
        return request.turn_index < turns.size() ? turns[request.turn_index] : std::string {};
    }

  private:
    [[nodiscard]] auto script_for(PolicyTurnRequest const& request) const -> std::vector<std::string> const&
    {
        for (auto const& key: { request.episode_id, std::to_string(request.user_id), std::string("*") })
            if (auto it = _scripts.find(key); it != _scripts.end())
                return it->second;
        throw DataError("no scripted turns for episode " + request.episode_id);
    }

    Scripts _scripts;
};

// ---------------------------------------------------------------------------
// User agent

struct FeedbackRequest
{
    std::vector<std::string> history_titles;
    std::string grounded_title;
    std::string related_items; ///< numbered titles returned by the grounding
    std::vector<ItemId> related_ids;
};

enum class Stance
{
    Affirm,
    Deny,
    Suggest,
    Unknown,
};

enum class FeedbackProvenance
{
    Simulated,
    Remote,
    Fallback, ///< remote call failed; simulated rule used instead
};

struct Feedback
{
    std::string text;
    Stance stance = Stance::Unknown;
    FeedbackProvenance provenance = FeedbackProvenance::Simulated;
};

/// One user agent instance serves one episode: it is initialized with that user.
class UserAgent
{
  public:
    virtual ~UserAgent() = default;
    [[nodiscard]] virtual auto respond(FeedbackRequest const& request) const -> Feedback = 0;
};

/// Builds the user agent for an episode from its interaction sequence.
class UserAgentFactory
{
  public:
    virtual ~UserAgentFactory() = default;
    [[nodiscard]] virtual auto make(InteractionSequence const& seq) const -> std::unique_ptr<UserAgent> = 0;
};

/// Document frequencies of title tokens over the whole catalog.
class TokenStats
{
  public:
    explicit TokenStats(ItemCatalog const& catalog): _documents(catalog.size())
    {
        for (auto const& item: catalog.items())
        {
            auto tokens = word_tokens(item.title);
            auto unique = std::set<std::string>(tokens.begin(), tokens.end());
            for (auto const& t: unique)
                ++_df[t];
        }
    }

    /// Smoothed inverse document frequency.
    [[nodiscard]] auto idf(std::string const& token) const -> double
    {
        auto const it = _df.find(token);
        auto const df = it == _df.end() ? 0.0 : static_cast<double>(it->second);
        return std::log((1.0 + static_cast<double>(_documents)) / (1.0 + df)) + 1.0;
    }

  private:
    std::size_t _documents;
    std::unordered_map<std::string, std::size_t> _df;
};

inline auto is_stopword(std::string_view token) -> bool
{
    static constexpr auto words = std::array<std::string_view, 16> {
        "a", "an", "and", "at", "by", "for", "from", "in", "is", "of", "on", "or", "the", "to", "vol", "with",
    };
    return std::find(words.begin(), words.end(), token) != words.end();
}

/// Deterministic stand-in for the LLM user agent.
///
/// affirm  - the target item is among the grounded items
/// suggest - title/history token Jaccard >= threshold: name the top-2 TF-IDF history tokens
/// deny    - otherwise: name the most frequent history token
///
/// The held-out target title never appears in the feedback text.
class SimulatedUserAgent final: public UserAgent
{
  public:
    static constexpr std::string_view affirm_text = "The list matches my interests.";

    SimulatedUserAgent(ItemCatalog const& catalog,
                       std::shared_ptr<TokenStats const> stats,
                       ItemId target,
                       double jaccard_threshold = 0.1):
        _target_title(to_lower_ascii(catalog.title(target))),
        _stats(std::move(stats)),
        _target(target),
        _threshold(jaccard_threshold)
    {
    }

    [[nodiscard]] auto respond(FeedbackRequest const& request) const -> Feedback override
    {
        if (request.related_ids.empty())
            throw UsageError("user feedback requires a non-empty item list");

        if (std::find(request.related_ids.begin(), request.related_ids.end(), _target) != request.related_ids.end())
            return finish(std::string(affirm_text), Stance::Affirm);

        auto history_counts = std::map<std::string, std::size_t> {};
        for (auto const& title: request.history_titles)
            for (auto& t: word_tokens(title))
                if (!is_stopword(t))
                    ++history_counts[t];

        auto const title_tokens = [&] {
            auto set = std::set<std::string> {};
            for (auto& t: word_tokens(request.grounded_title))
                if (!is_stopword(t))
                    set.insert(std::move(t));
            return set;
        }();

        auto shared = std::size_t { 0 };
        for (auto const& t: title_tokens)
            shared += history_counts.contains(t) ? 1 : 0;
        auto const union_size = title_tokens.size() + history_counts.size() - shared;
        auto const jaccard = union_size == 0 ? 0.0 : static_cast<double>(shared) / static_cast<double>(union_size);

        if (jaccard >= _threshold)
        {
            auto scored = std::vector<std::pair<double, std::string>> {};
            for (auto const& [token, tf]: history_counts)
                scored.emplace_back(static_cast<double>(tf) * _stats->idf(token), token);
            std::sort(scored.begin(), scored.end(), [](auto const& a, auto const& b) {
                return a.first > b.first || (a.first == b.first && a.second < b.second);
            });
            auto text = std::string("Somewhat related, but not quite right.");
            if (!scored.empty())
            {
                text += " I am more interested in \"" + scored[0].second + "\"";
                if (scored.size() > 1)
                    text += " and \"" + scored[1].second + "\"";
                text += ".";
            }
            return finish(std::move(text), Stance::Suggest);
        }

        auto text = std::string("This does not match my interests.");
        auto best = history_counts.end();
        for (auto it = history_counts.begin(); it != history_counts.end(); ++it)
            if (best == history_counts.end() || it->second > best->second)
                best = it;
        if (best != history_counts.end())
            text += " I mostly enjoy items related to \"" + best->first + "\".";
        return finish(std::move(text), Stance::Deny);
    }

  private:
    [[nodiscard]] auto leaks(std::string_view text) const -> bool
    {
        return to_lower_ascii(text).find(_target_title) != std::string::npos;
    }

    [[nodiscard]] auto finish(std::string text, Stance stance) const -> Feedback
    {
        if (leaks(text))
            text = stance == Stance::Affirm ? "Yes." : "No.";
        // a title short enough to hide inside even the fallback: blank it out with a
        // character the title does not contain, so every replacement makes progress
        auto blank = '\x01';
        for (auto c: std::string_view("_*#~-"))
            if (_target_title.find(c) == std::string::npos)
            {
                blank = c;
                break;
            }
        while (leaks(text))
        {
            auto const at = to_lower_ascii(text).find(_target_title);
            text.replace(at, _target_title.size(), std::string(_target_title.size(), blank));
        }
        return Feedback { std::move(text), stance, FeedbackProvenance::Simulated };
    }

    std::string _target_title;
    std::shared_ptr<TokenStats const> _stats;
    ItemId _target;
    double _threshold;
};

class SimulatedUserAgentFactory final: public UserAgentFactory
{
  public:
    explicit SimulatedUserAgentFactory(ItemCatalog const& catalog, double jaccard_threshold = 0.1):
        _catalog(catalog), _stats(std::make_shared<TokenStats>(catalog)), _threshold(jaccard_threshold)
    {
    }

    [[nodiscard]] auto make(InteractionSequence const& seq) const -> std::unique_ptr<UserAgent> override
    {
        return std::make_unique<SimulatedUserAgent>(_catalog, _stats, seq.target, _threshold);
    }

  private:
    ItemCatalog const& _catalog;
    std::shared_ptr<TokenStats const> _stats;
    double _threshold;
};

} // namespace groundrec
