// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <groundrec/catalog.hpp>
#include <groundrec/embedder.hpp>
#include <groundrec/error.hpp>
#include <groundrec/jsonl.hpp>

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace groundrec
{

/// Dense row-major matrix of item embeddings; row i belongs to item id i.
///
/// On-disk layout (little-endian):
///   "MGFE" | u32 version=1 | u32 dim | u64 count | count*dim f32 | u32 CRC32(rows)
class EmbeddingStore
{
  public:
    static constexpr std::string_view magic = "MGFE";
    static constexpr std::uint32_t version = 1;
    static constexpr std::size_t header_size = 4 + 4 + 4 + 8;

    EmbeddingStore() = default;

    EmbeddingStore(std::size_t dim, std::vector<float> data): _dim(dim), _data(std::move(data))
    {
        if (_dim == 0)
            throw DataError("embedding store dimension must be positive");
        if (_data.size() % _dim != 0)
            throw DataError("embedding store data is not a whole number of rows");
        for (auto i = std::size_t { 0 }; i < _data.size(); ++i)
            if (!std::isfinite(_data[i]))
                throw DataError("non-finite value in embedding row " + std::to_string(i / _dim));
    }

    [[nodiscard]] auto dimension() const noexcept -> std::size_t { return _dim; }
    [[nodiscard]] auto size() const noexcept -> std::size_t { return _dim == 0 ? 0 : _data.size() / _dim; }
    [[nodiscard]] auto empty() const noexcept -> bool { return size() == 0; }
    [[nodiscard]] auto data() const noexcept -> std::span<float const> { return _data; }

    [[nodiscard]] auto row(std::size_t i) const -> std::span<float const>
    {
        return std::span<float const>(_data).subspan(i * _dim, _dim);
    }

    [[nodiscard]] auto serialize() const -> std::string
    {
        auto out = std::string {};
        out.reserve(header_size + _data.size() * 4 + 4);
        out.append(magic);
        put_u32(out, version);
        put_u32(out, static_cast<std::uint32_t>(_dim));
        put_u64(out, static_cast<std::uint64_t>(size()));
        auto const rows_begin = out.size();
        for (auto v: _data)
            put_u32(out, std::bit_cast<std::uint32_t>(v));
        put_u32(out, crc(std::string_view(out).substr(rows_begin)));
        return out;
    }

    static auto deserialize(std::string_view bytes) -> EmbeddingStore
    {
        if (bytes.size() < header_size + 4 || bytes.substr(0, 4) != magic)
            throw DataError("not an embedding store (bad magic or truncated header)");
        auto const ver = get_u32(bytes, 4);
        if (ver != version)
            throw DataError("unsupported embedding store version " + std::to_string(ver));
        auto const dim = get_u32(bytes, 8);
        auto const count = get_u64(bytes, 12);
        if (dim == 0)
            throw DataError("embedding store dimension is zero");
        auto const row_bytes = std::uint64_t { dim } * 4;
        if (count > (bytes.size() - header_size - 4) / row_bytes
            || header_size + count * row_bytes + 4 != bytes.size())
            throw DataError("embedding store size does not match its header");

        auto const rows = bytes.substr(header_size, count * row_bytes);
        auto const stored_crc = get_u32(bytes, header_size + rows.size());
        if (crc(rows) != stored_crc)
            throw DataError("embedding store checksum mismatch");

        auto data = std::vector<float>(count * dim);
        for (auto i = std::size_t { 0 }; i < data.size(); ++i)
            data[i] = std::bit_cast<float>(get_u32(rows, i * 4));
        return EmbeddingStore(dim, std::move(data));
    }

    void save(std::filesystem::path const& path) const { write_file_bytes(path, serialize()); }

    static auto load(std::filesystem::path const& path) -> EmbeddingStore
    {
        try
        {
            return deserialize(read_file_bytes(path));
        }
        catch (DataError const& e)
        {
            throw DataError(path.string() + ": " + e.what());
        }
    }

    friend auto operator==(EmbeddingStore const&, EmbeddingStore const&) -> bool = default;

  private:
    static auto crc(std::string_view bytes) -> std::uint32_t
    {
        auto value = ::crc32(0L, Z_NULL, 0);
        // zlib takes uInt lengths; feed in chunks for very large stores
        while (!bytes.empty())
        {
            auto const n = std::min<std::size_t>(bytes.size(), 1u << 30);
            value = ::crc32(value, reinterpret_cast<Bytef const*>(bytes.data()), static_cast<uInt>(n));
            bytes.remove_prefix(n);
        }
        return static_cast<std::uint32_t>(value);
    }

    static void put_u32(std::string& out, std::uint32_t v)
    {
        for (auto i = 0; i < 4; ++i)
            out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    static void put_u64(std::string& out, std::uint64_t v)
    {
        for (auto i = 0; i < 8; ++i)
            out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    static auto get_u32(std::string_view in, std::size_t at) -> std::uint32_t
    {
        auto v = std::uint32_t { 0 };
        for (auto i = 0; i < 4; ++i)
            v |= std::uint32_t { static_cast<std::uint8_t>(in[at + i]) } << (8 * i);
        return v;
    }

    static auto get_u64(std::string_view in, std::size_t at) -> std::uint64_t
    {
        auto v = std::uint64_t { 0 };
        for (auto i = 0; i < 8; ++i)
            v |= std::uint64_t { static_cast<std::uint8_t>(in[at + i]) } << (8 * i);
        return v;
    }

    std::size_t _dim = 0;
    std::vector<float> _data;
};

struct BuildOptions
{
    std::size_t batch_size = 64;
    /// When set, completed rows are saved here if the embedder fails, and a build
    /// resumes from an existing checkpoint with the same dimension.
    std::optional<std::filesystem::path> checkpoint;
};

/// Raised when embedding fails midway; `completed_rows()` rows were checkpointed.
class BuildInterrupted: public Error
{
  public:
    BuildInterrupted(std::string const& message, std::size_t completed):
        Error(message + " (" + std::to_string(completed) + " rows completed)"), _completed(completed)
    {
    }

    [[nodiscard]] auto completed_rows() const noexcept -> std::size_t { return _completed; }

  private:
    std::size_t _completed;
};

/// Embeds every catalog title in item-id order.
inline auto build_index(ItemCatalog const& catalog, Embedder const& embedder, BuildOptions const& options = {})
    -> EmbeddingStore
{
    if (catalog.empty())
        throw DataError("cannot build an index over an empty catalog");
    auto const dim = embedder.dimension();
    auto const batch = std::max<std::size_t>(options.batch_size, 1);

    auto data = std::vector<float> {};
    data.reserve(catalog.size() * dim);

    if (options.checkpoint && std::filesystem::exists(*options.checkpoint))
    {
        auto partial = EmbeddingStore::load(*options.checkpoint);
        if (partial.dimension() == dim && partial.size() <= catalog.size())
            data.assign(partial.data().begin(), partial.data().end());
    }

    auto titles = std::vector<std::string> {};
    for (auto next = data.size() / dim; next < catalog.size(); next += titles.size())
    {
        titles.clear();
        for (auto id = next; id < std::min(catalog.size(), next + batch); ++id)
            titles.push_back(catalog.title(static_cast<ItemId>(id)));
        try
        {
            for (auto const& vec: embedder.embed_batch(titles))
            {
                if (vec.size() != dim)
                    throw DataError("embedder returned a vector of the wrong dimension");
                data.insert(data.end(), vec.begin(), vec.end());
            }
        }
        catch (Error const& e)
        {
            auto const done = data.size() / dim;
            if (options.checkpoint)
                EmbeddingStore(dim, std::move(data)).save(*options.checkpoint);
            throw BuildInterrupted(std::string("index build failed: ") + e.what(), done);
        }
    }

    if (options.checkpoint)
        std::filesystem::remove(*options.checkpoint);
    return EmbeddingStore(dim, std::move(data));
}

} // namespace groundrec
