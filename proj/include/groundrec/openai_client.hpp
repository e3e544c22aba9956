// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/error.hpp>
#include <groundrec/jsonl.hpp>

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

namespace groundrec
{

struct EndpointConfig
{
    /// Base URL including the API prefix, e.g. "http://127.0.0.1:8000/v1".
    std::string base_url;
    std::string model;
    /// Name of the environment variable holding the bearer token; empty for none.
    std::string api_key_env;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff { 250 };
    std::chrono::seconds timeout { 120 };
    std::ptrdiff_t max_in_flight = 8;
    bool debug = false;
};

struct ChatMessage
{
    std::string role;
    std::string content;
};

struct ChatOptions
{
    double temperature = 0.0;
    std::optional<std::int64_t> seed;
    std::optional<int> max_tokens;
    std::vector<std::string> stop;
};

struct ChatResult
{
    std::string content;
    std::string finish_reason;
};

/// Minimal client for OpenAI-compatible `/embeddings` and `/chat/completions`.
///
/// Every request is retried up to `max_attempts` times with exponential backoff. At most
/// `max_in_flight` requests run concurrently per client. Shareable across threads.
class OpenAIClient
{
  public:
    explicit OpenAIClient(EndpointConfig config): _config(std::move(config)), _slots(_config.max_in_flight)
    {
        if (_config.max_attempts < 1)
            throw UsageError("max_attempts must be at least 1");
        if (_config.max_in_flight < 1)
            throw UsageError("max_in_flight must be at least 1");
        auto const scheme_end = _config.base_url.find("://");
        if (scheme_end == std::string::npos)
            throw UsageError("endpoint must start with http:// or https://: " + _config.base_url);
        auto const path_start = _config.base_url.find('/', scheme_end + 3);
        _origin = _config.base_url.substr(0, path_start);
        _prefix = path_start == std::string::npos ? std::string {} : _config.base_url.substr(path_start);
        while (!_prefix.empty() && _prefix.back() == '/')
            _prefix.pop_back();
        if (!_config.api_key_env.empty())
            if (auto const* key = std::getenv(_config.api_key_env.c_str()))
                _api_key = key;
    }

    [[nodiscard]] auto config() const noexcept -> EndpointConfig const& { return _config; }

    [[nodiscard]] auto embeddings(std::vector<std::string> const& inputs) const -> std::vector<std::vector<float>>
    {
        auto body = json { { "model", _config.model }, { "input", inputs }, { "encoding_format", "float" } };
        auto const response = post("/embeddings", body);
        auto out = std::vector<std::vector<float>>(inputs.size());
        try
        {
            auto const& data = response.at("data");
            if (data.size() != inputs.size())
                throw RemoteError("embedding response has " + std::to_string(data.size()) + " rows for "
                                      + std::to_string(inputs.size()) + " inputs",
                                  1);
            for (auto i = std::size_t { 0 }; i < data.size(); ++i)
            {
                auto const index = data[i].contains("index") ? data[i].at("index").get<std::size_t>() : i;
                if (index >= out.size())
                    throw RemoteError("embedding response index out of range", 1);
                out[index] = data[i].at("embedding").get<std::vector<float>>();
            }
        }
        catch (json::exception const& e)
        {
            throw RemoteError(std::string("malformed embedding response: ") + e.what(), 1);
        }
        return out;
    }

    [[nodiscard]] auto chat(std::vector<ChatMessage> const& messages, ChatOptions const& options) const -> ChatResult
    {
        auto body = json::object();
        body["model"] = _config.model;
        body["messages"] = json::array();
        for (auto const& m: messages)
            body["messages"].push_back({ { "role", m.role }, { "content", m.content } });
        body["temperature"] = options.temperature;
        if (options.seed)
            body["seed"] = *options.seed;
        if (options.max_tokens)
            body["max_tokens"] = *options.max_tokens;
        if (!options.stop.empty())
            body["stop"] = options.stop;

        auto const response = post("/chat/completions", body);
        try
        {
            auto const& choice = response.at("choices").at(0);
            auto result = ChatResult {};
            auto const& content = choice.at("message").at("content");
            result.content = content.is_null() ? std::string {} : content.get<std::string>();
            if (choice.contains("finish_reason") && choice.at("finish_reason").is_string())
                result.finish_reason = choice.at("finish_reason").get<std::string>();
            return result;
        }
        catch (json::exception const& e)
        {
            throw RemoteError(std::string("malformed chat response: ") + e.what(), 1);
        }
    }

    /// POSTs `body` to `<base_url><path>` with retries; returns the parsed JSON response.
    [[nodiscard]] auto post(std::string const& path, json const& body) const -> json
    {
        auto const payload = body.dump();
        auto const target = _prefix + path;
        auto last_error = std::string {};
        auto backoff = _config.initial_backoff;

        for (auto attempt = 1; attempt <= _config.max_attempts; ++attempt)
        {
            debug_log("request " + target + " attempt " + std::to_string(attempt) + ": " + payload);
            auto outcome = send_once(target, payload);
            if (outcome.parsed)
            {
                debug_log("response " + target + ": " + outcome.raw);
                return std::move(*outcome.parsed);
            }
            last_error = outcome.error;
            debug_log("failure " + target + ": " + last_error);
            if (attempt < _config.max_attempts)
            {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
        throw RemoteError(_origin + target + ": " + last_error, _config.max_attempts);
    }

  private:
    struct Outcome
    {
        std::optional<json> parsed;
        std::string raw;
        std::string error;
    };

    auto send_once(std::string const& target, std::string const& payload) const -> Outcome
    {
        _slots.acquire();
        auto release = std::unique_ptr<std::counting_semaphore<>, void (*)(std::counting_semaphore<>*)>(
            &_slots, [](std::counting_semaphore<>* s) { s->release(); });

        auto client = httplib::Client(_origin);
        client.set_connection_timeout(_config.timeout);
        client.set_read_timeout(_config.timeout);
        client.set_write_timeout(_config.timeout);
        auto headers = httplib::Headers {};
        if (!_api_key.empty())
            headers.emplace("Authorization", "Bearer " + _api_key);

        auto res = client.Post(target, headers, payload, "application/json");
        if (!res)
            return Outcome { .parsed = std::nullopt, .raw = {}, .error = "transport: " + httplib::to_string(res.error()) };
        if (res->status != 200)
            return Outcome { .parsed = std::nullopt,
                             .raw = res->body,
                             .error = "HTTP " + std::to_string(res->status) + ": " + redact(res->body) };
        try
        {
            return Outcome { .parsed = json::parse(res->body), .raw = res->body, .error = {} };
        }
        catch (json::parse_error const& e)
        {
            return Outcome { .parsed = std::nullopt, .raw = res->body, .error = std::string("bad JSON: ") + e.what() };
        }
    }

    [[nodiscard]] auto redact(std::string text) const -> std::string
    {
        if (_api_key.empty())
            return text;
        for (auto pos = text.find(_api_key); pos != std::string::npos; pos = text.find(_api_key, pos))
            text.replace(pos, _api_key.size(), "[REDACTED]");
        return text;
    }

    void debug_log(std::string const& message) const
    {
        if (!_config.debug)
            return;
        static auto mutex = std::mutex {};
        auto const lock = std::lock_guard(mutex);
        std::cerr << "[openai] " << redact(message) << '\n';
    }

    EndpointConfig _config;
    std::string _origin;
    std::string _prefix;
    std::string _api_key;
    mutable std::counting_semaphore<> _slots;
};

} // namespace groundrec
