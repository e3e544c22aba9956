// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/catalog.hpp>
#include <groundrec/embedder.hpp>
#include <groundrec/vector_store.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace groundrec
{

struct Hit
{
    ItemId item {};
    double distance = 0.0;

    friend auto operator==(Hit const&, Hit const&) -> bool = default;
};

struct GroundingResult
{
    std::string query_title;
    std::vector<Hit> hits; ///< ascending distance, ties by ascending item id
    bool truncated = false; ///< k exceeded the catalog size

    friend auto operator==(GroundingResult const&, GroundingResult const&) -> bool = default;
};

/// Euclidean distance from `query` to every row, accumulated in double precision.
inline auto l2_distances(EmbeddingStore const& store, std::span<float const> query) -> std::vector<double>
{
    auto const dim = store.dimension();
    if (query.size() != dim)
        throw DataError("query dimension " + std::to_string(query.size()) + " does not match store dimension "
                        + std::to_string(dim));
    auto const n = store.size();
    auto out = std::vector<double>(n);
    auto const rows = store.data();

    constexpr auto block = std::size_t { 256 };
    for (auto begin = std::size_t { 0 }; begin < n; begin += block)
    {
        auto const end = std::min(n, begin + block);
        for (auto i = begin; i < end; ++i)
        {
            auto const* row = rows.data() + i * dim;
            auto sum = 0.0;
            for (auto j = std::size_t { 0 }; j < dim; ++j)
            {
                auto const diff = static_cast<double>(row[j]) - static_cast<double>(query[j]);
                sum += diff * diff;
            }
            out[i] = std::sqrt(sum);
        }
    }
    return out;
}

/// The k nearest rows to `query`: exact full scan, ties broken by ascending item id.
inline auto nearest(EmbeddingStore const& store, std::span<float const> query, std::size_t k) -> std::vector<Hit>
{
    if (k == 0)
        throw UsageError("k must be at least 1");
    auto const distances = l2_distances(store, query);
    auto hits = std::vector<Hit>(distances.size());
    for (auto i = std::size_t { 0 }; i < hits.size(); ++i)
        hits[i] = Hit { static_cast<ItemId>(i), distances[i] };

    auto const before = [](Hit const& a, Hit const& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.item < b.item);
    };
    auto const keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), before);
    hits.resize(keep);
    return hits;
}

/// 1-based position of `target` in the full ordering by (distance, item id).
inline auto rank_in(std::span<double const> distances, ItemId target) -> std::size_t
{
    if (target >= distances.size())
        throw DataError("unknown target item id " + std::to_string(target));
    auto const d_target = distances[target];
    auto rank = std::size_t { 1 };
    for (auto j = std::size_t { 0 }; j < distances.size(); ++j)
        if (distances[j] < d_target || (distances[j] == d_target && j < target))
            ++rank;
    return rank;
}

/// Grounding action over a built store: embeds a generated title and retrieves the
/// closest actual items. Read-only after construction; safe to share across threads.
class Grounder
{
  public:
    Grounder(EmbeddingStore const& store, Embedder const& embedder): _store(store), _embedder(embedder)
    {
        if (store.empty())
            throw DataError("grounding requires a non-empty embedding store");
        if (store.dimension() != embedder.dimension())
            throw DataError("embedder dimension " + std::to_string(embedder.dimension())
                            + " does not match store dimension " + std::to_string(store.dimension()));
    }

    [[nodiscard]] auto store() const noexcept -> EmbeddingStore const& { return _store; }
    [[nodiscard]] auto embedder() const noexcept -> Embedder const& { return _embedder; }

    [[nodiscard]] auto ground(std::string const& query_title, std::size_t k) const -> GroundingResult
    {
        auto const query = _embedder.embed(query_title);
        return GroundingResult {
            .query_title = query_title,
            .hits = nearest(_store, query, k),
            .truncated = k > _store.size(),
        };
    }

    [[nodiscard]] auto rank_of(std::string const& query_title, ItemId target) const -> std::size_t
    {
        if (target >= _store.size())
            throw DataError("unknown target item id " + std::to_string(target));
        auto const query = _embedder.embed(query_title);
        return rank_in(l2_distances(_store, query), target);
    }

  private:
    EmbeddingStore const& _store;
    Embedder const& _embedder;
};

} // namespace groundrec
