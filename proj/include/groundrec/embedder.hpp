// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/error.hpp>
#include <groundrec/text.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace groundrec
{

using Embedding = std::vector<float>;

/// Maps text to a fixed-dimension vector. Implementations must be safe to share
/// across threads.
class Embedder
{
  public:
    virtual ~Embedder() = default;

    [[nodiscard]] virtual auto dimension() const -> std::size_t = 0;

    /// Throws DataError on text that is empty after trimming.
    [[nodiscard]] virtual auto embed(std::string_view text) const -> Embedding = 0;

    /// Order-preserving; element i equals embed(texts[i]). Any failure fails the
    /// whole batch with a BatchError listing the failed indices.
    [[nodiscard]] virtual auto embed_batch(std::span<std::string const> texts) const -> std::vector<Embedding>
    {
        auto out = std::vector<Embedding> {};
        out.reserve(texts.size());
        auto failed = std::vector<std::size_t> {};
        auto first_message = std::string {};
        for (auto i = std::size_t { 0 }; i < texts.size(); ++i)
        {
            try
            {
                out.push_back(embed(texts[i]));
            }
            catch (Error const& e)
            {
                if (failed.empty())
                    first_message = e.what();
                failed.push_back(i);
            }
        }
        if (!failed.empty())
            throw BatchError("embedding batch failed: " + first_message, std::move(failed));
        return out;
    }

  protected:
    static void require_text(std::string_view text)
    {
        if (trim(text).empty())
            throw DataError("cannot embed empty text");
    }
};

/// Deterministic, model-free embedder: signed feature hashing of character 3-grams.
///
/// The text is trimmed, ASCII-lowercased and wrapped in '#' markers; each 3-byte window
/// hashes to a bucket and a sign. The accumulated vector is L2-normalized.
class ToyEmbedder final: public Embedder
{
  public:
    explicit ToyEmbedder(std::size_t dimension, std::uint64_t seed = 0): _dimension(dimension), _seed(seed)
    {
        if (dimension == 0)
            throw UsageError("embedding dimension must be positive");
    }

    [[nodiscard]] auto dimension() const -> std::size_t override { return _dimension; }
    [[nodiscard]] auto seed() const noexcept -> std::uint64_t { return _seed; }

    [[nodiscard]] auto embed(std::string_view text) const -> Embedding override
    {
        require_text(text);
        auto const padded = "#" + to_lower_ascii(trim(text)) + "#";
        auto acc = std::vector<double>(_dimension, 0.0);
        for (auto i = std::size_t { 0 }; i + 3 <= padded.size(); ++i)
        {
            auto const h = splitmix64(fnv1a64(std::string_view(padded).substr(i, 3)) ^ _seed);
            auto const sign = (h >> 63) != 0 ? -1.0 : 1.0;
            acc[h % _dimension] += sign;
        }

        auto norm_sq = 0.0;
        for (auto v: acc)
            norm_sq += v * v;
        if (norm_sq == 0.0)
        {
            // every n-gram cancelled out
            acc[splitmix64(fnv1a64(padded) ^ _seed) % _dimension] = 1.0;
            norm_sq = 1.0;
        }
        auto const norm = std::sqrt(norm_sq);

        auto out = Embedding(_dimension);
        for (auto i = std::size_t { 0 }; i < _dimension; ++i)
            out[i] = static_cast<float>(acc[i] / norm);
        return out;
    }

  private:
    std::size_t _dimension;
    std::uint64_t _seed;
};

/// Fixed text → vector table; unknown text is a DataError. Useful for hand-placed
/// geometry and precomputed vectors.
class TableEmbedder final: public Embedder
{
  public:
    TableEmbedder(std::size_t dimension, std::map<std::string, Embedding, std::less<>> table):
        _dimension(dimension), _table(std::move(table))
    {
        for (auto const& [text, vec]: _table)
            if (vec.size() != _dimension)
                throw DataError("table vector for \"" + text + "\" has wrong dimension");
    }

    [[nodiscard]] auto dimension() const -> std::size_t override { return _dimension; }

    [[nodiscard]] auto embed(std::string_view text) const -> Embedding override
    {
        require_text(text);
        auto it = _table.find(text);
        if (it == _table.end())
            throw DataError("no table embedding for \"" + std::string(text) + "\"");
        return it->second;
    }

  private:
    std::size_t _dimension;
    std::map<std::string, Embedding, std::less<>> _table;
};

} // namespace groundrec
