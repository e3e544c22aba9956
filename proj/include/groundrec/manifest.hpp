// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/error.hpp>
#include <groundrec/jsonl.hpp>

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace groundrec
{

inline constexpr std::string_view version_string = "0.1.0";

/// Schema versions of every file format the tool reads or writes.
inline auto schema_versions() -> ordered_json
{
    auto doc = ordered_json::object();
    doc["embedding_store"] = "MGFE v1";
    doc["split"] = "jsonl v1";
    doc["recall"] = "jsonl v1";
    doc["script"] = "jsonl v1";
    doc["trajectory"] = "jsonl v1";
    doc["logprob"] = "jsonl v1";
    doc["scored"] = "jsonl v1";
    doc["report"] = "json v1";
    doc["manifest"] = "json v1";
    return doc;
}

inline auto sha256_file(std::filesystem::path const& path) -> std::string
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    auto ctx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw Error("sha256 initialisation failed");
    auto buffer = std::array<char, 1 << 16> {};
    while (in)
    {
        in.read(buffer.data(), buffer.size());
        if (in.gcount() > 0)
            EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
    }
    auto digest = std::array<unsigned char, EVP_MAX_MD_SIZE> {};
    auto length = 0u;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &length);

    static constexpr char hex[] = "0123456789abcdef";
    auto out = std::string {};
    for (auto i = 0u; i < length; ++i)
    {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Reproducibility record written next to every command's primary output.
class RunManifest
{
  public:
    RunManifest(std::string command, std::vector<std::string> argv):
        _command(std::move(command)), _argv(std::move(argv)), _start(std::chrono::steady_clock::now()),
        _started_at(std::chrono::system_clock::now())
    {
    }

    void set_config(ordered_json config) { _config = std::move(config); }
    void set_seed(std::uint64_t seed) { _seed = seed; }
    void add_input(std::filesystem::path const& path) { _inputs.push_back(path); }
    void add_output(std::filesystem::path const& path) { _outputs.push_back(path); }
    void add_count(std::string const& name, std::size_t value) { _counts[name] = value; }

    [[nodiscard]] auto to_json() const -> ordered_json
    {
        auto const digests = [](std::vector<std::filesystem::path> const& paths) {
            auto arr = ordered_json::array();
            for (auto const& p: paths)
                arr.push_back({ { "path", p.string() }, { "sha256", sha256_file(p) } });
            return arr;
        };
        auto const elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - _start);
        auto const t = std::chrono::system_clock::to_time_t(_started_at);
        auto stamp = std::array<char, 32> {};
        auto tm = std::tm {};
        gmtime_r(&t, &tm);
        std::strftime(stamp.data(), stamp.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);

        auto doc = ordered_json::object();
        doc["command"] = _command;
        doc["argv"] = _argv;
        doc["code_version"] = version_string;
        doc["schemas"] = schema_versions();
        doc["seed"] = _seed;
        doc["config"] = _config;
        doc["inputs"] = digests(_inputs);
        doc["outputs"] = digests(_outputs);
        doc["counts"] = _counts;
        doc["started_at"] = stamp.data();
        doc["elapsed_ms"] = elapsed.count();
        return doc;
    }

    void write(std::filesystem::path const& path) const { write_file_bytes(path, to_json().dump(2) + "\n"); }

  private:
    std::string _command;
    std::vector<std::string> _argv;
    std::chrono::steady_clock::time_point _start;
    std::chrono::system_clock::time_point _started_at;
    ordered_json _config = ordered_json::object();
    std::uint64_t _seed = 0;
    std::vector<std::filesystem::path> _inputs;
    std::vector<std::filesystem::path> _outputs;
    std::map<std::string, std::size_t> _counts;
};

/// Recomputes the checksums recorded in a manifest. Returns one message per mismatch.
inline auto verify_manifest(std::filesystem::path const& path) -> std::vector<std::string>
{
    auto doc = json {};
    try
    {
        doc = json::parse(read_file_bytes(path));
    }
    catch (json::parse_error const& e)
    {
        throw DataError(path.string() + ": " + e.what());
    }
    auto problems = std::vector<std::string> {};
    for (auto const* section: { "inputs", "outputs" })
    {
        for (auto const& entry: doc.at(section))
        {
            auto const file = std::filesystem::path(entry.at("path").get<std::string>());
            if (!std::filesystem::exists(file))
            {
                problems.push_back(file.string() + ": missing");
                continue;
            }
            if (sha256_file(file) != entry.at("sha256").get<std::string>())
                problems.push_back(file.string() + ": checksum differs");
        }
    }
    return problems;
}

} // namespace groundrec
