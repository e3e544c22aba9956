// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/embedder.hpp>
#include <groundrec/openai_client.hpp>

#include <cmath>
#include <memory>
#include <mutex>
#include <unordered_map>

namespace groundrec
{

/// Embeddings from an OpenAI-compatible service. Vectors are returned exactly as the
/// service produced them (no re-normalization); only dimension and finiteness are checked.
class RemoteEmbedder final: public Embedder
{
  public:
    RemoteEmbedder(std::shared_ptr<OpenAIClient const> client, std::size_t dimension, bool memoize = true):
        _client(std::move(client)), _dimension(dimension), _memoize(memoize)
    {
        if (dimension == 0)
            throw UsageError("embedding dimension must be positive");
    }

    [[nodiscard]] auto dimension() const -> std::size_t override { return _dimension; }

    [[nodiscard]] auto embed(std::string_view text) const -> Embedding override
    {
        require_text(text);
        auto const key = std::string(text);
        if (_memoize)
        {
            auto const lock = std::lock_guard(_memo_mutex);
            if (auto it = _memo.find(key); it != _memo.end())
                return it->second;
        }
        auto rows = _client->embeddings({ key });
        auto vec = checked(std::move(rows.at(0)));
        remember(key, vec);
        return vec;
    }

    [[nodiscard]] auto embed_batch(std::span<std::string const> texts) const -> std::vector<Embedding> override
    {
        auto failed = std::vector<std::size_t> {};
        for (auto i = std::size_t { 0 }; i < texts.size(); ++i)
            if (trim(texts[i]).empty())
                failed.push_back(i);
        if (!failed.empty())
            throw BatchError("cannot embed empty text", std::move(failed));
        if (texts.empty())
            return {};

        auto rows = std::vector<std::vector<float>> {};
        try
        {
            rows = _client->embeddings(std::vector<std::string>(texts.begin(), texts.end()));
        }
        catch (RemoteError const& e)
        {
            auto all = std::vector<std::size_t>(texts.size());
            for (auto i = std::size_t { 0 }; i < all.size(); ++i)
                all[i] = i;
            throw BatchError(e.what(), std::move(all));
        }

        auto out = std::vector<Embedding> {};
        out.reserve(rows.size());
        for (auto i = std::size_t { 0 }; i < rows.size(); ++i)
        {
            out.push_back(checked(std::move(rows[i])));
            remember(texts[i], out.back());
        }
        return out;
    }

  private:
    auto checked(std::vector<float> vec) const -> Embedding
    {
        if (vec.size() != _dimension)
            throw RemoteError("embedding service returned dimension " + std::to_string(vec.size()) + ", expected "
                                  + std::to_string(_dimension),
                              1);
        for (auto v: vec)
            if (!std::isfinite(v))
                throw RemoteError("embedding service returned a non-finite value", 1);
        return vec;
    }

    void remember(std::string const& key, Embedding const& vec) const
    {
        if (!_memoize)
            return;
        auto const lock = std::lock_guard(_memo_mutex);
        _memo.emplace(key, vec);
    }

    std::shared_ptr<OpenAIClient const> _client;
    std::size_t _dimension;
    bool _memoize;
    mutable std::mutex _memo_mutex;
    mutable std::unordered_map<std::string, Embedding> _memo;
};

} // namespace groundrec
