// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/catalog.hpp>
#include <groundrec/jsonl.hpp>
#include <groundrec/text.hpp>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace fixtures
{

/// Scratch directory removed on destruction.
class TempDir
{
  public:
    TempDir()
    {
        static auto counter = std::atomic<int> { 0 };
        _path = std::filesystem::temp_directory_path()
                / ("groundrec-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(_path);
        std::filesystem::create_directories(_path);
    }
    ~TempDir() { std::filesystem::remove_all(_path); }
    TempDir(TempDir const&) = delete;
    auto operator=(TempDir const&) -> TempDir& = delete;

    auto path() const -> std::filesystem::path const& { return _path; }
    auto operator/(std::string const& name) const -> std::filesystem::path { return _path / name; }

  private:
    std::filesystem::path _path;
};

inline void write_text(std::filesystem::path const& path, std::string const& text)
{
    groundrec::write_file_bytes(path, text);
}

inline auto read_text(std::filesystem::path const& path) -> std::string
{
    return groundrec::read_file_bytes(path);
}

/// Source directory of committed test data.
inline auto data_dir() -> std::filesystem::path
{
    return std::filesystem::path(GROUNDREC_TEST_DATA);
}

inline constexpr std::string_view words[] = {
    "river", "shadow", "garden", "silver", "engine", "winter", "harbor", "crystal", "forest", "lantern",
    "echo",  "summit", "velvet", "marble", "comet",  "desert", "orchid", "thunder", "quiet",  "mirror",
    "ember", "canyon", "violet", "falcon", "island", "meadow", "copper", "signal",  "hollow", "atlas",
};

/// Deterministic catalog of `n` distinct three-word titles suffixed with the id.
inline auto synthetic_items(std::size_t n, std::uint64_t seed = 7) -> std::vector<groundrec::Item>
{
    auto rng = std::mt19937_64(seed);
    auto pick = [&] { return std::string(words[rng() % std::size(words)]); };
    auto items = std::vector<groundrec::Item> {};
    for (auto i = std::size_t { 0 }; i < n; ++i)
    {
        auto title = pick() + " " + pick() + " " + pick() + " " + std::to_string(i);
        title[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(title[0])));
        items.push_back(groundrec::Item { static_cast<groundrec::ItemId>(i), std::move(title) });
    }
    return items;
}

inline void write_catalog(std::filesystem::path const& path, std::vector<groundrec::Item> const& items)
{
    auto rows = std::vector<groundrec::ordered_json> {};
    for (auto const& it: items)
        rows.push_back({ { "item_id", it.id }, { "title", it.title } });
    groundrec::write_jsonl(path, rows);
}

/// Random interaction log: `users` users with 3..25 events over `items` items.
inline void write_interactions(std::filesystem::path const& path, std::size_t users, std::size_t items,
                               std::uint64_t seed = 11)
{
    auto rng = std::mt19937_64(seed);
    auto rows = std::vector<groundrec::ordered_json> {};
    for (auto u = std::size_t { 0 }; u < users; ++u)
    {
        auto const events = 3 + rng() % 23;
        for (auto e = std::size_t { 0 }; e < events; ++e)
            rows.push_back({ { "user_id", 100 + u }, { "item_id", rng() % items }, { "timestamp", 1000 + e * 10 } });
    }
    groundrec::write_jsonl(path, rows);
}

} // namespace fixtures
