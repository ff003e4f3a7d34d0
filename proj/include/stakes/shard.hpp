#pragma once

// Activation shard: one example's residual activations as an S x D row-major
// f32 matrix, plus the on-disk codec.
//
// File layout (all integers little-endian):
//   [0, 4)   magic "APSH"
//   [4, 8)   version, u32 = 1
//   [8]      dtype code, u8 = 1 (f32)
//   [9, 13)  S, u32
//   [13, 17) D, u32
//   [17, ..) S*D f32, row-major

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stakes/error.hpp"

namespace stakes {

inline constexpr std::array<char, 4> kShardMagic{'A', 'P', 'S', 'H'};
inline constexpr std::uint32_t kShardVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::size_t kShardHeaderBytes = 17;

class ActivationShard {
public:
    ActivationShard() = default;

    ActivationShard(std::string example_id, std::size_t seq_len, std::size_t dim,
                    std::vector<float> data)
        : example_id_(std::move(example_id)), seq_len_(seq_len), dim_(dim), data_(std::move(data)) {
        require(seq_len_ >= 1, ErrorKind::InvalidArgument, "shard seq_len must be >= 1");
        require(dim_ >= 1, ErrorKind::InvalidArgument, "shard dim must be >= 1");
        require(data_.size() == seq_len_ * dim_, ErrorKind::InvalidArgument,
                "shard data size " + std::to_string(data_.size()) + " != S*D = " +
                    std::to_string(seq_len_ * dim_));
        for (float v : data_) {
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::NonFinite, "shard '" + example_id_ + "' contains a non-finite value");
            }
        }
    }

    const std::string& example_id() const noexcept { return example_id_; }
    std::size_t seq_len() const noexcept { return seq_len_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const float> data() const noexcept { return data_; }

    std::span<const float> row(std::size_t s) const noexcept {
        return std::span<const float>(data_).subspan(s * dim_, dim_);
    }

    friend bool operator==(const ActivationShard&, const ActivationShard&) = default;

private:
    std::string example_id_;
    std::size_t seq_len_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<unsigned char> encode_shard(const ActivationShard& shard) {
    std::vector<unsigned char> out;
    out.reserve(kShardHeaderBytes + shard.data().size() * 4);
    out.insert(out.end(), kShardMagic.begin(), kShardMagic.end());
    detail::put_u32(out, kShardVersion);
    out.push_back(kDtypeF32);
    detail::put_u32(out, static_cast<std::uint32_t>(shard.seq_len()));
    detail::put_u32(out, static_cast<std::uint32_t>(shard.dim()));
    for (float v : shard.data()) {
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "refusing to encode a non-finite value");
        detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

/// The example id is not stored in the file; callers supply it (typically
/// from the manifest record that references the shard).
inline ActivationShard decode_shard(std::span<const unsigned char> bytes, std::string example_id = {}) {
    require(bytes.size() >= kShardHeaderBytes, ErrorKind::Truncated, "shard header truncated");
    require(std::equal(kShardMagic.begin(), kShardMagic.end(), bytes.begin()), ErrorKind::BadMagic,
            "shard magic is not APSH");
    const auto version = detail::get_u32(bytes.data() + 4);
    require(version == kShardVersion, ErrorKind::BadMagic,
            "unsupported shard version " + std::to_string(version));
    require(bytes[8] == kDtypeF32, ErrorKind::BadMagic,
            "unsupported dtype code " + std::to_string(bytes[8]));
    const std::size_t seq_len = detail::get_u32(bytes.data() + 9);
    const std::size_t dim = detail::get_u32(bytes.data() + 13);
    require(seq_len >= 1 && dim >= 1, ErrorKind::BadMagic, "shard header has zero dimension");
    const std::size_t count = seq_len * dim;
    const std::size_t payload = bytes.size() - kShardHeaderBytes;
    require(payload >= count * 4, ErrorKind::Truncated,
            "shard payload has " + std::to_string(payload) + " bytes, expected " +
                std::to_string(count * 4));
    require(payload == count * 4, ErrorKind::BadMagic, "shard has trailing bytes after payload");

    std::vector<float> data(count);
    const unsigned char* p = bytes.data() + kShardHeaderBytes;
    for (std::size_t i = 0; i < count; ++i, p += 4) {
        data[i] = std::bit_cast<float>(detail::get_u32(p));
        if (!std::isfinite(data[i])) {
            throw Error(ErrorKind::NonFinite, "shard entry " + std::to_string(i) + " is not finite");
        }
    }
    return ActivationShard(std::move(example_id), seq_len, dim, std::move(data));
}

inline void write_shard(const ActivationShard& shard, const std::filesystem::path& destination) {
    const auto bytes = encode_shard(shard);
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + destination.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + destination.string());
}

inline ActivationShard read_shard(const std::filesystem::path& source, std::string example_id = {}) {
    std::ifstream in(source, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open shard " + source.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_shard(bytes, std::move(example_id));
    } catch (const Error& e) {
        throw Error(e.kind(), source.string() + ": " + e.detail());
    }
}

}  // namespace stakes
