// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/catalog.hpp>
#include <groundrec/grounding.hpp>
#include <groundrec/text.hpp>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace groundrec
{

/// Half-open byte range [begin, end).
struct Span
{
    std::size_t begin = 0;
    std::size_t end = 0;

    friend auto operator==(Span const&, Span const&) -> bool = default;
};

enum class ActionKind
{
    Think,
    Ground,
    Answer,
};

struct Action
{
    ActionKind kind {};
    std::string text; ///< reasoning text, or the item title for Ground/Answer (trimmed)
    Span span;

    friend auto operator==(Action const&, Action const&) -> bool = default;
};

enum class InjectionKind
{
    ItemList,
    Feedback,
    Notice,
};

struct Injection
{
    InjectionKind kind {};
    std::string text;
    Span span;

    friend auto operator==(Injection const&, Injection const&) -> bool = default;
};

enum class Violation
{
    UnclosedTag,
    UnknownTag,
    BadOrder,
    NoAnswer,
    MultipleAnswers,
    EmptyTitle,
    GroundAfterAnswer,
    TextOutsideTags,
};

inline auto to_string(Violation v) -> std::string_view
{
    switch (v)
    {
        case Violation::UnclosedTag: return "UnclosedTag";
        case Violation::UnknownTag: return "UnknownTag";
        case Violation::BadOrder: return "BadOrder";
        case Violation::NoAnswer: return "NoAnswer";
        case Violation::MultipleAnswers: return "MultipleAnswers";
        case Violation::EmptyTitle: return "EmptyTitle";
        case Violation::GroundAfterAnswer: return "GroundAfterAnswer";
        case Violation::TextOutsideTags: return "TextOutsideTags";
    }
    return "?";
}

struct FormatVerdict
{
    std::optional<Violation> violation;
    std::size_t position = 0; ///< byte offset where the violation was detected

    [[nodiscard]] auto valid() const noexcept -> bool { return !violation.has_value(); }

    static auto ok() -> FormatVerdict { return {}; }
    static auto fail(Violation v, std::size_t at = 0) -> FormatVerdict { return FormatVerdict { v, at }; }
};

struct TurnParse
{
    std::vector<Action> actions;
    FormatVerdict verdict;
};

using TranscriptEntry = std::variant<Action, Injection>;

struct EpisodeParse
{
    std::vector<TranscriptEntry> entries;
    FormatVerdict verdict;
};

namespace grammar_detail
{

    enum class Tag
    {
        Think,
        Ground,
        Answer,
        ItemList,
        Feedback,
        Notice,
    };

    inline constexpr auto tag_names = std::array<std::string_view, 6> {
        "think", "ground", "answer", "item_list", "feedback", "notice",
    };

    inline auto tag_from_name(std::string_view name) -> std::optional<Tag>
    {
        for (auto i = std::size_t { 0 }; i < tag_names.size(); ++i)
            if (tag_names[i] == name)
                return static_cast<Tag>(i);
        return std::nullopt;
    }

    inline auto contains_known_tag(std::string_view content) -> bool
    {
        for (auto pos = content.find('<'); pos != std::string_view::npos; pos = content.find('<', pos + 1))
        {
            auto const gt = content.find('>', pos);
            if (gt == std::string_view::npos)
                return false;
            auto name = content.substr(pos + 1, gt - pos - 1);
            if (!name.empty() && name.front() == '/')
                name.remove_prefix(1);
            if (tag_from_name(name))
                return true;
        }
        return false;
    }

    struct Block
    {
        Tag tag {};
        Span span;
        std::string_view content;
    };

    /// One scanning step. Exactly one of `block` / `violation` is set unless input is exhausted.
    struct Step
    {
        std::optional<Block> block;
        std::optional<FormatVerdict> violation;
    };

    inline auto next_block(std::string_view text, std::size_t& pos) -> Step
    {
        while (pos < text.size() && is_space(text[pos]))
            ++pos;
        if (pos >= text.size())
            return {};
        if (text[pos] != '<')
            return Step { std::nullopt, FormatVerdict::fail(Violation::TextOutsideTags, pos) };

        auto const gt = text.find('>', pos);
        if (gt == std::string_view::npos)
            return Step { std::nullopt, FormatVerdict::fail(Violation::TextOutsideTags, pos) };

        auto const name = text.substr(pos + 1, gt - pos - 1);
        if (!name.empty() && name.front() == '/')
        {
            auto const v = tag_from_name(name.substr(1)) ? Violation::BadOrder : Violation::UnknownTag;
            return Step { std::nullopt, FormatVerdict::fail(v, pos) };
        }
        auto const tag = tag_from_name(name);
        if (!tag)
            return Step { std::nullopt, FormatVerdict::fail(Violation::UnknownTag, pos) };

        auto const close = "</" + std::string(name) + ">";
        auto const close_pos = text.find(close, gt + 1);
        if (close_pos == std::string_view::npos)
            return Step { std::nullopt, FormatVerdict::fail(Violation::UnclosedTag, pos) };

        auto const content = text.substr(gt + 1, close_pos - gt - 1);
        if (contains_known_tag(content))
            return Step { std::nullopt, FormatVerdict::fail(Violation::BadOrder, gt + 1) };

        auto block = Block { *tag, Span { pos, close_pos + close.size() }, content };
        pos = close_pos + close.size();
        return Step { block, std::nullopt };
    }

    inline auto action_kind(Tag tag) -> std::optional<ActionKind>
    {
        switch (tag)
        {
            case Tag::Think: return ActionKind::Think;
            case Tag::Ground: return ActionKind::Ground;
            case Tag::Answer: return ActionKind::Answer;
            default: return std::nullopt;
        }
    }

    inline auto injection_kind(Tag tag) -> std::optional<InjectionKind>
    {
        switch (tag)
        {
            case Tag::ItemList: return InjectionKind::ItemList;
            case Tag::Feedback: return InjectionKind::Feedback;
            case Tag::Notice: return InjectionKind::Notice;
            default: return std::nullopt;
        }
    }

} // namespace grammar_detail

/// Parses one policy turn. A turn must match `Think+ (Ground | Answer)?` with only
/// whitespace between blocks. Never throws on malformed input; the first violation in
/// textual order is reported instead. Spans are shifted by `offset`.
inline auto parse_turn(std::string_view policy_text, std::size_t offset = 0) -> TurnParse
{
    using namespace grammar_detail;
    auto out = TurnParse {};
    auto pos = std::size_t { 0 };
    auto const fail = [&](FormatVerdict v) {
        v.position += offset;
        out.verdict = v;
        return out;
    };

    auto has_think = false;
    auto terminal = std::optional<ActionKind> {};
    while (true)
    {
        auto const step = next_block(policy_text, pos);
        if (step.violation)
            return fail(*step.violation);
        if (!step.block)
            break;
        auto const& block = *step.block;
        auto const kind = action_kind(block.tag);
        if (!kind)
            return fail(FormatVerdict::fail(Violation::UnknownTag, block.span.begin));

        if (terminal == ActionKind::Answer)
        {
            auto const v = *kind == ActionKind::Ground   ? Violation::GroundAfterAnswer
                           : *kind == ActionKind::Answer ? Violation::MultipleAnswers
                                                         : Violation::BadOrder;
            return fail(FormatVerdict::fail(v, block.span.begin));
        }
        if (terminal == ActionKind::Ground)
            return fail(FormatVerdict::fail(Violation::BadOrder, block.span.begin));
        if (*kind != ActionKind::Think && !has_think)
            return fail(FormatVerdict::fail(Violation::BadOrder, block.span.begin));

        auto const body = std::string(trim(block.content));
        if (*kind != ActionKind::Think && body.empty())
            return fail(FormatVerdict::fail(Violation::EmptyTitle, block.span.begin));

        if (*kind == ActionKind::Think)
            has_think = true;
        else
            terminal = *kind;
        out.actions.push_back(
            Action { *kind, body, Span { block.span.begin + offset, block.span.end + offset } });
    }

    if (!has_think)
        return fail(FormatVerdict::fail(Violation::BadOrder, policy_text.size()));
    return out;
}

/// Checks a whole episode: at least one Think; every turn starts with Think; every Ground
/// is followed by ItemList then Feedback, or by a Notice when the grounding cap refused it
/// (after a Notice, later refused Grounds carry no injection); exactly one Answer, last.
inline auto validate_episode(std::span<TranscriptEntry const> transcript) -> FormatVerdict
{
    auto const at = [&](std::size_t i) -> std::size_t {
        return std::visit([](auto const& e) { return e.span.begin; }, transcript[i]);
    };
    auto const injection_at = [&](std::size_t i, InjectionKind kind) {
        if (i >= transcript.size())
            return false;
        auto const* inj = std::get_if<Injection>(&transcript[i]);
        return inj != nullptr && inj->kind == kind;
    };

    auto thinks = std::size_t { 0 };
    auto answered = false;
    auto notice_seen = false;
    auto turn_start = true;

    for (auto i = std::size_t { 0 }; i < transcript.size(); ++i)
    {
        auto const* action = std::get_if<Action>(&transcript[i]);
        if (action == nullptr)
            return FormatVerdict::fail(Violation::BadOrder, at(i)); // injection not owned by a Ground

        if (answered)
        {
            auto const v = action->kind == ActionKind::Ground   ? Violation::GroundAfterAnswer
                           : action->kind == ActionKind::Answer ? Violation::MultipleAnswers
                                                                : Violation::BadOrder;
            return FormatVerdict::fail(v, at(i));
        }
        if (turn_start && action->kind != ActionKind::Think)
            return FormatVerdict::fail(Violation::BadOrder, at(i));
        if (action->kind != ActionKind::Think && trim(action->text).empty())
            return FormatVerdict::fail(Violation::EmptyTitle, at(i));

        switch (action->kind)
        {
            case ActionKind::Think:
                ++thinks;
                turn_start = false;
                break;
            case ActionKind::Answer: answered = true; break;
            case ActionKind::Ground:
                if (injection_at(i + 1, InjectionKind::ItemList))
                {
                    if (!injection_at(i + 2, InjectionKind::Feedback))
                        return FormatVerdict::fail(Violation::BadOrder, at(i + 1));
                    i += 2;
                }
                else if (injection_at(i + 1, InjectionKind::Notice))
                {
                    notice_seen = true;
                    i += 1;
                }
                else if (!notice_seen)
                {
                    return FormatVerdict::fail(Violation::BadOrder, at(i));
                }
                turn_start = true;
                break;
        }
    }

    auto const end = transcript.empty() ? std::size_t { 0 } : at(transcript.size() - 1);
    if (!answered)
        return FormatVerdict::fail(Violation::NoAnswer, end);
    if (thinks == 0)
        return FormatVerdict::fail(Violation::BadOrder, 0);
    return FormatVerdict::ok();
}

/// Parses a complete rendered transcript (policy blocks and injected blocks) and
/// validates it as an episode.
inline auto parse_episode(std::string_view transcript) -> EpisodeParse
{
    using namespace grammar_detail;
    auto out = EpisodeParse {};
    auto pos = std::size_t { 0 };
    while (true)
    {
        auto const step = next_block(transcript, pos);
        if (step.violation)
        {
            out.verdict = *step.violation;
            return out;
        }
        if (!step.block)
            break;
        auto const& block = *step.block;
        if (auto kind = action_kind(block.tag))
        {
            auto const body = std::string(trim(block.content));
            out.entries.emplace_back(Action { *kind, body, block.span });
        }
        else
        {
            out.entries.emplace_back(
                Injection { *injection_kind(block.tag), std::string(block.content), block.span });
        }
    }
    out.verdict = validate_episode(out.entries);
    return out;
}

inline auto render(Action const& action) -> std::string
{
    switch (action.kind)
    {
        case ActionKind::Think: return "<think>" + action.text + "</think>";
        case ActionKind::Ground: return "<ground>" + action.text + "</ground>";
        case ActionKind::Answer: return "<answer>" + action.text + "</answer>";
    }
    return {};
}

inline auto render(Injection const& injection) -> std::string
{
    switch (injection.kind)
    {
        case InjectionKind::ItemList: return "<item_list>" + injection.text + "</item_list>";
        case InjectionKind::Feedback: return "<feedback>" + injection.text + "</feedback>";
        case InjectionKind::Notice: return "<notice>" + injection.text + "</notice>";
    }
    return {};
}

/// Numbered catalog titles, one per line, wrapped in item_list tags.
inline auto render_item_list(GroundingResult const& result, ItemCatalog const& catalog) -> std::string
{
    auto out = std::string("<item_list>\n");
    for (auto i = std::size_t { 0 }; i < result.hits.size(); ++i)
        out += std::to_string(i + 1) + ". " + catalog.title(result.hits[i].item) + "\n";
    out += "</item_list>";
    return out;
}

} // namespace groundrec
