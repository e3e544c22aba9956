// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace groundrec
{

inline auto is_space(char c) noexcept -> bool
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline auto trim(std::string_view s) noexcept -> std::string_view
{
    auto begin = std::size_t { 0 };
    auto end = s.size();
    while (begin < end && is_space(s[begin]))
        ++begin;
    while (end > begin && is_space(s[end - 1]))
        --end;
    return s.substr(begin, end - begin);
}

inline auto to_lower_ascii(std::string_view s) -> std::string
{
    auto out = std::string(s);
    for (auto& c: out)
        if (c >= 'A' && c <= 'Z')
            c = static_cast<char>(c - 'A' + 'a');
    return out;
}

/// Lower-cased runs of ASCII letters and digits. Other bytes separate tokens.
inline auto word_tokens(std::string_view s) -> std::vector<std::string>
{
    auto tokens = std::vector<std::string> {};
    auto current = std::string {};
    for (auto c: s)
    {
        auto const alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
        if (alnum)
        {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        }
        else if (!current.empty())
        {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

inline constexpr auto fnv1a64(std::string_view bytes) noexcept -> std::uint64_t
{
    auto h = std::uint64_t { 0xcbf29ce484222325ULL };
    for (auto c: bytes)
    {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline constexpr auto splitmix64(std::uint64_t x) noexcept -> std::uint64_t
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-module seed derived from the master seed and a stable label.
inline constexpr auto derive_seed(std::uint64_t master, std::string_view label) noexcept -> std::uint64_t
{
    return splitmix64(master ^ fnv1a64(label));
}

} // namespace groundrec
