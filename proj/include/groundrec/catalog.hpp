// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/error.hpp>
#include <groundrec/jsonl.hpp>
#include <groundrec/text.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace groundrec
{

using ItemId = std::uint32_t;
using UserId = std::int64_t;

/// Chronological history length kept per user before the next-item split.
inline constexpr std::size_t max_sequence_events = 20;

struct Item
{
    ItemId id {};
    std::string title;
};

/// The actual item space: dense ids in [0, N) with unique, non-empty titles.
class ItemCatalog
{
  public:
    ItemCatalog() = default;

    /// Items may arrive in any order; ids must form exactly {0..N-1}.
    explicit ItemCatalog(std::vector<Item> items)
    {
        std::sort(items.begin(), items.end(), [](auto const& a, auto const& b) { return a.id < b.id; });
        for (auto i = std::size_t { 0 }; i < items.size(); ++i)
        {
            if (items[i].id != i)
                throw DataError("item ids must be unique and dense in [0, N); offending id "
                                + std::to_string(items[i].id));
            if (trim(items[i].title).empty())
                throw DataError("item " + std::to_string(items[i].id) + " has an empty title");
            auto const [_, inserted] = _index.emplace(items[i].title, items[i].id);
            if (!inserted)
                throw DataError("duplicate title for items " + std::to_string(_index.at(items[i].title)) + " and "
                                + std::to_string(items[i].id) + ": \"" + items[i].title + "\"");
        }
        _items = std::move(items);
    }

    [[nodiscard]] auto size() const noexcept -> std::size_t { return _items.size(); }
    [[nodiscard]] auto empty() const noexcept -> bool { return _items.empty(); }
    [[nodiscard]] auto contains(ItemId id) const noexcept -> bool { return id < _items.size(); }
    [[nodiscard]] auto items() const noexcept -> std::span<Item const> { return _items; }

    [[nodiscard]] auto title(ItemId id) const -> std::string const&
    {
        if (!contains(id))
            throw DataError("unknown item id " + std::to_string(id));
        return _items[id].title;
    }

    [[nodiscard]] auto lookup(std::string const& title) const -> std::optional<ItemId>
    {
        if (auto it = _index.find(title); it != _index.end())
            return it->second;
        return std::nullopt;
    }

  private:
    std::vector<Item> _items;
    std::unordered_map<std::string, ItemId> _index;
};

struct InteractionSequence
{
    UserId user_id {};
    std::vector<ItemId> history; ///< chronological, oldest first
    ItemId target {};

    friend auto operator==(InteractionSequence const&, InteractionSequence const&) -> bool = default;
};

struct IngestResult
{
    ItemCatalog catalog;
    std::vector<InteractionSequence> sequences; ///< ordered by user_id
    std::size_t skipped_users = 0;              ///< users with fewer than two events
    std::size_t dropped_repeats = 0;            ///< history events equal to the target, removed
};

inline auto load_catalog(std::filesystem::path const& catalog_file) -> ItemCatalog
{
    auto items = std::vector<Item> {};
    for_each_jsonl(catalog_file, [&](std::size_t line, json const& row) {
        auto const id = row.at("item_id").get<std::int64_t>();
        if (id < 0 || id > std::numeric_limits<ItemId>::max())
            throw DataError(catalog_file.string() + ":" + std::to_string(line) + ": item_id out of range");
        items.push_back(Item { .id = static_cast<ItemId>(id), .title = row.at("title").get<std::string>() });
    });
    return ItemCatalog(std::move(items));
}

/// Builds per-user next-item sequences from raw catalog and interaction logs.
///
/// Events are sorted per user by timestamp (ties keep file order), the most recent
/// `max_sequence_events` are kept, the last one becomes the target and the rest the history.
inline auto ingest(std::filesystem::path const& catalog_file, std::filesystem::path const& interactions_file)
    -> IngestResult
{
    auto result = IngestResult {};
    result.catalog = load_catalog(catalog_file);

    struct Event
    {
        std::int64_t timestamp;
        ItemId item;
    };
    auto per_user = std::map<UserId, std::vector<Event>> {};

    for_each_jsonl(interactions_file, [&](std::size_t line, json const& row) {
        auto const user = row.at("user_id").get<UserId>();
        auto const item = row.at("item_id").get<std::int64_t>();
        auto const ts = row.at("timestamp").get<std::int64_t>();
        if (item < 0 || !result.catalog.contains(static_cast<ItemId>(item)))
            throw DataError(interactions_file.string() + ":" + std::to_string(line) + ": unknown item_id "
                            + std::to_string(item));
        per_user[user].push_back(Event { ts, static_cast<ItemId>(item) });
    });

    for (auto& [user, events]: per_user)
    {
        if (events.size() < 2)
        {
            ++result.skipped_users;
            continue;
        }
        std::stable_sort(
            events.begin(), events.end(), [](auto const& a, auto const& b) { return a.timestamp < b.timestamp; });
        auto const first = events.size() > max_sequence_events ? events.size() - max_sequence_events : 0;

        auto seq = InteractionSequence { .user_id = user, .history = {}, .target = events.back().item };
        for (auto i = first; i + 1 < events.size(); ++i)
        {
            if (events[i].item == seq.target)
            {
                ++result.dropped_repeats;
                continue;
            }
            seq.history.push_back(events[i].item);
        }
        if (seq.history.empty())
        {
            ++result.skipped_users;
            continue;
        }
        result.sequences.push_back(std::move(seq));
    }
    return result;
}

struct SplitRatios
{
    std::uint32_t train = 8;
    std::uint32_t valid = 1;
    std::uint32_t test = 1;
};

struct Splits
{
    std::vector<InteractionSequence> train;
    std::vector<InteractionSequence> valid;
    std::vector<InteractionSequence> test;
};

/// Exact part sizes by largest remainder; ties favour train, then valid.
inline auto split_sizes(std::size_t total, SplitRatios ratios) -> std::array<std::size_t, 3>
{
    auto const weights = std::array<std::uint64_t, 3> { ratios.train, ratios.valid, ratios.test };
    auto const sum = weights[0] + weights[1] + weights[2];
    auto sizes = std::array<std::size_t, 3> {};
    auto remainders = std::array<std::uint64_t, 3> {};
    auto assigned = std::size_t { 0 };
    for (auto i = 0; i < 3; ++i)
    {
        sizes[i] = static_cast<std::size_t>(total * weights[i] / sum);
        remainders[i] = total * weights[i] % sum;
        assigned += sizes[i];
    }
    while (assigned < total)
    {
        auto best = 0;
        for (auto i = 1; i < 3; ++i)
            if (remainders[i] > remainders[best])
                best = i;
        ++sizes[best];
        remainders[best] = 0;
        ++assigned;
    }
    return sizes;
}

/// User-level random partition. Deterministic for a fixed seed on every platform
/// (mt19937_64 output is standardized; the shuffle is hand-rolled Fisher-Yates).
inline auto split(std::vector<InteractionSequence> sequences, SplitRatios ratios, std::uint64_t seed) -> Splits
{
    if (ratios.train == 0 || ratios.valid == 0 || ratios.test == 0)
        throw UsageError("split ratios must be positive");
    if (sequences.size() < 10)
        throw DataError("need at least 10 sequences to split, got " + std::to_string(sequences.size()));

    std::sort(sequences.begin(), sequences.end(), [](auto const& a, auto const& b) { return a.user_id < b.user_id; });
    auto rng = std::mt19937_64(seed);
    for (auto i = sequences.size() - 1; i > 0; --i)
    {
        auto const j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(sequences[i], sequences[j]);
    }

    auto const sizes = split_sizes(sequences.size(), ratios);
    auto out = Splits {};
    auto it = sequences.begin();
    auto take = [&](std::vector<InteractionSequence>& dst, std::size_t n) {
        dst.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<std::ptrdiff_t>(n)));
        it += static_cast<std::ptrdiff_t>(n);
        std::sort(dst.begin(), dst.end(), [](auto const& a, auto const& b) { return a.user_id < b.user_id; });
    };
    take(out.train, sizes[0]);
    take(out.valid, sizes[1]);
    take(out.test, sizes[2]);
    return out;
}

/// Interaction counts over the training split and the derived sample difficulty.
class PopularityTable
{
  public:
    static constexpr double unseen_difficulty = std::numeric_limits<double>::infinity();

    void add(ItemId item, std::uint64_t n = 1) { _counts[item] += n; }

    [[nodiscard]] auto count(ItemId item) const -> std::uint64_t
    {
        auto it = _counts.find(item);
        return it == _counts.end() ? 0 : it->second;
    }

    /// 1 / count, or `unseen_difficulty` for items never seen in training.
    [[nodiscard]] auto difficulty(ItemId item) const -> double
    {
        auto const n = count(item);
        return n == 0 ? unseen_difficulty : 1.0 / static_cast<double>(n);
    }

    [[nodiscard]] auto total() const -> std::uint64_t
    {
        auto sum = std::uint64_t { 0 };
        for (auto const& [_, n]: _counts)
            sum += n;
        return sum;
    }

    [[nodiscard]] auto counts() const noexcept -> std::map<ItemId, std::uint64_t> const& { return _counts; }

  private:
    std::map<ItemId, std::uint64_t> _counts;
};

inline auto popularity(std::span<InteractionSequence const> train) -> PopularityTable
{
    auto table = PopularityTable {};
    for (auto const& seq: train)
    {
        for (auto item: seq.history)
            table.add(item);
        table.add(seq.target);
    }
    return table;
}

// split files

inline auto to_json(InteractionSequence const& seq) -> ordered_json
{
    auto row = ordered_json::object();
    row["user_id"] = seq.user_id;
    row["history"] = seq.history;
    row["target"] = seq.target;
    return row;
}

inline void write_sequences(std::filesystem::path const& path, std::span<InteractionSequence const> sequences)
{
    auto rows = std::vector<ordered_json> {};
    rows.reserve(sequences.size());
    for (auto const& seq: sequences)
        rows.push_back(to_json(seq));
    write_jsonl(path, rows);
}

/// Reads a split file. When a catalog is given every id is checked against it.
inline auto read_sequences(std::filesystem::path const& path, ItemCatalog const* catalog = nullptr)
    -> std::vector<InteractionSequence>
{
    auto out = std::vector<InteractionSequence> {};
    for_each_jsonl(path, [&](std::size_t line, json const& row) {
        auto seq = InteractionSequence {
            .user_id = row.at("user_id").get<UserId>(),
            .history = row.at("history").get<std::vector<ItemId>>(),
            .target = row.at("target").get<ItemId>(),
        };
        if (seq.history.empty())
            throw DataError(path.string() + ":" + std::to_string(line) + ": empty history");
        if (catalog)
        {
            auto const check = [&](ItemId id) {
                if (!catalog->contains(id))
                    throw DataError(path.string() + ":" + std::to_string(line) + ": unknown item_id "
                                    + std::to_string(id));
            };
            check(seq.target);
            for (auto id: seq.history)
                check(id);
        }
        out.push_back(std::move(seq));
    });
    return out;
}

} // namespace groundrec
