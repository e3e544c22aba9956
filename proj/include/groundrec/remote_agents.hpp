// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/agents.hpp>
#include <groundrec/openai_client.hpp>
#include <groundrec/prompts.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace groundrec
{

struct RemotePolicyOptions
{
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::optional<int> max_tokens = 1024;
};

/// Policy served by an OpenAI-compatible chat endpoint. Generation stops at the first
/// closing ground/answer tag; the tag is restored when the server strips it.
class RemotePolicy final: public Policy
{
  public:
    RemotePolicy(std::shared_ptr<OpenAIClient const> client, RemotePolicyOptions options):
        _client(std::move(client)), _options(options)
    {
    }

    /// Chat history for a turn: prompt, then alternating assistant (policy) and user
    /// (injected) messages.
    [[nodiscard]] static auto messages(PolicyTurnRequest const& request) -> std::vector<ChatMessage>
    {
        auto out = std::vector<ChatMessage> {
            { "system", request.system_prompt },
            { "user", request.user_message },
        };
        for (auto const& seg: request.transcript)
        {
            auto const role = is_trainable(seg.source) ? "assistant" : "user";
            if (out.back().role == role && out.size() > 2)
                out.back().content += seg.text;
            else
                out.push_back(ChatMessage { role, seg.text });
        }
        return out;
    }

    /// Restores a stop tag the server removed from the end of the completion.
    [[nodiscard]] static auto close_open_action(std::string text) -> std::string
    {
        for (auto const tag: { std::string_view("ground"), std::string_view("answer") })
        {
            auto const open = text.rfind("<" + std::string(tag) + ">");
            auto const close = text.rfind("</" + std::string(tag) + ">");
            if (open != std::string::npos && (close == std::string::npos || close < open))
            {
                text += "</" + std::string(tag) + ">";
                break;
            }
        }
        return text;
    }

  protected:
    [[nodiscard]] auto generate(PolicyTurnRequest const& request) const -> std::string override
    {
        auto options = ChatOptions {
            .temperature = _options.temperature,
            .seed = static_cast<std::int64_t>(
                derive_seed(_options.seed, request.episode_id + ":" + std::to_string(request.turn_index))
                >> 1),
            .max_tokens = _options.max_tokens,
            .stop = { "</ground>", "</answer>" },
        };
        auto result = _client->chat(messages(request), options);
        if (result.finish_reason == "stop" || result.finish_reason.empty())
            return close_open_action(std::move(result.content));
        return result.content;
    }

  private:
    std::shared_ptr<OpenAIClient const> _client;
    RemotePolicyOptions _options;
};

/// LLM user agent. Falls back to the simulated rule, flagged as such, when the service fails.
class RemoteUserAgent final: public UserAgent
{
  public:
    RemoteUserAgent(std::shared_ptr<OpenAIClient const> client,
                    double temperature,
                    std::unique_ptr<UserAgent> fallback):
        _client(std::move(client)), _temperature(temperature), _fallback(std::move(fallback))
    {
    }

    [[nodiscard]] static auto prompt(FeedbackRequest const& request) -> std::string
    {
        return prompts::user_agent(request.history_titles, request.grounded_title, request.related_items);
    }

    [[nodiscard]] auto respond(FeedbackRequest const& request) const -> Feedback override
    {
        if (request.related_ids.empty())
            throw UsageError("user feedback requires a non-empty item list");
        try
        {
            auto result = _client->chat({ ChatMessage { "user", prompt(request) } },
                                        ChatOptions { .temperature = _temperature, .seed = {}, .max_tokens = {}, .stop = {} });
            if (trim(result.content).empty())
                throw RemoteError("user agent returned empty feedback", 1);
            return Feedback { std::string(trim(result.content)), Stance::Unknown, FeedbackProvenance::Remote };
        }
        catch (RemoteError const&)
        {
            auto fb = _fallback->respond(request);
            fb.provenance = FeedbackProvenance::Fallback;
            return fb;
        }
    }

  private:
    std::shared_ptr<OpenAIClient const> _client;
    double _temperature;
    std::unique_ptr<UserAgent> _fallback;
};

class RemoteUserAgentFactory final: public UserAgentFactory
{
  public:
    RemoteUserAgentFactory(std::shared_ptr<OpenAIClient const> client, double temperature, ItemCatalog const& catalog):
        _client(std::move(client)), _temperature(temperature), _simulated(catalog)
    {
    }

    [[nodiscard]] auto make(InteractionSequence const& seq) const -> std::unique_ptr<UserAgent> override
    {
        return std::make_unique<RemoteUserAgent>(_client, _temperature, _simulated.make(seq));
    }

  private:
    std::shared_ptr<OpenAIClient const> _client;
    double _temperature;
    SimulatedUserAgentFactory _simulated;
};

} // namespace groundrec
