// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/error.hpp>

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace groundrec
{

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Calls `fn(line_number, object)` for every non-blank line. Line numbers are 1-based.
template <typename Fn>
void for_each_jsonl(std::filesystem::path const& path, Fn&& fn)
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());

    auto line = std::string {};
    auto line_no = std::size_t { 0 };
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto value = json {};
        try
        {
            value = json::parse(line);
        }
        catch (json::parse_error const& e)
        {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!value.is_object())
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
        try
        {
            fn(line_no, value);
        }
        catch (json::exception const& e)
        {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

/// Serializes one record per line. Keys keep insertion order so output bytes are stable.
inline void write_jsonl(std::filesystem::path const& path, std::vector<ordered_json> const& rows)
{
    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    for (auto const& row: rows)
        out << row.dump() << '\n';
    if (!out)
        throw DataError("write failed for " + path.string());
}

inline auto read_file_bytes(std::filesystem::path const& path) -> std::string
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    return buffer.str();
}

inline void write_file_bytes(std::filesystem::path const& path, std::string_view bytes)
{
    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed for " + path.string());
}

} // namespace groundrec
