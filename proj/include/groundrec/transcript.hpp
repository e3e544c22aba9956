// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/error.hpp>
#include <groundrec/grammar.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace groundrec
{

enum class SegmentSource
{
    PolicyGenerated,
    ItemListInjected,
    FeedbackInjected,
    RecallInjected,
    NoticeInjected,
};

inline auto to_string(SegmentSource s) -> std::string_view
{
    switch (s)
    {
        case SegmentSource::PolicyGenerated: return "PolicyGenerated";
        case SegmentSource::ItemListInjected: return "ItemListInjected";
        case SegmentSource::FeedbackInjected: return "FeedbackInjected";
        case SegmentSource::RecallInjected: return "RecallInjected";
        case SegmentSource::NoticeInjected: return "NoticeInjected";
    }
    return "?";
}

inline auto segment_source_from_string(std::string_view s) -> SegmentSource
{
    for (auto v: { SegmentSource::PolicyGenerated,
                   SegmentSource::ItemListInjected,
                   SegmentSource::FeedbackInjected,
                   SegmentSource::RecallInjected,
                   SegmentSource::NoticeInjected })
        if (to_string(v) == s)
            return v;
    throw DataError("unknown segment source \"" + std::string(s) + "\"");
}

/// Only policy-generated text contributes to the policy loss.
inline constexpr auto is_trainable(SegmentSource s) noexcept -> bool
{
    return s == SegmentSource::PolicyGenerated;
}

struct Segment
{
    std::string text;
    Span span; ///< position in the response transcript (concatenation of all segments)
    SegmentSource source {};

    friend auto operator==(Segment const&, Segment const&) -> bool = default;
};

/// Ordered segments whose spans partition the response transcript.
class Transcript
{
  public:
    void append(std::string text, SegmentSource source)
    {
        auto const begin = _length;
        _length += text.size();
        _segments.push_back(Segment { std::move(text), Span { begin, _length }, source });
    }

    [[nodiscard]] auto segments() const noexcept -> std::span<Segment const> { return _segments; }
    [[nodiscard]] auto length() const noexcept -> std::size_t { return _length; }

    [[nodiscard]] auto text() const -> std::string
    {
        auto out = std::string {};
        out.reserve(_length);
        for (auto const& s: _segments)
            out += s.text;
        return out;
    }

  private:
    std::vector<Segment> _segments;
    std::size_t _length = 0;
};

/// Wraps injected content the way it appears in a transcript.
inline auto injected_block(std::string_view block) -> std::string
{
    return "\n" + std::string(block) + "\n";
}

/// Rebuilds the typed action/injection sequence from segments: each policy segment is
/// parsed as one turn, injected segments map to injections by source. Returns the first
/// turn-level violation if any policy segment fails to parse.
inline auto transcript_entries(std::span<Segment const> segments) -> EpisodeParse
{
    auto out = EpisodeParse {};
    for (auto const& seg: segments)
    {
        switch (seg.source)
        {
            case SegmentSource::PolicyGenerated:
            {
                auto turn = parse_turn(seg.text, seg.span.begin);
                if (!turn.verdict.valid())
                {
                    out.verdict = turn.verdict;
                    return out;
                }
                for (auto& a: turn.actions)
                    out.entries.emplace_back(std::move(a));
                break;
            }
            case SegmentSource::ItemListInjected:
                out.entries.emplace_back(Injection { InjectionKind::ItemList, seg.text, seg.span });
                break;
            case SegmentSource::FeedbackInjected:
                out.entries.emplace_back(Injection { InjectionKind::Feedback, seg.text, seg.span });
                break;
            case SegmentSource::NoticeInjected:
                out.entries.emplace_back(Injection { InjectionKind::Notice, seg.text, seg.span });
                break;
            case SegmentSource::RecallInjected: break; // prompt material, not part of the action sequence
        }
    }
    out.verdict = validate_episode(out.entries);
    return out;
}

} // namespace groundrec
