#pragma once

// Probe parameter files. Line-oriented text, one `key value` pair per line:
//
//   stakes-probe 1
//   kind attention
//   dim 16
//   temperature 5          (softmax only)
//   window 40              (max_rolling_means only)
//   bias 0.125
//   direction 0000803f...  (D little-endian f32, hex, 8 chars per value)
//   value_direction ...    (attention only)
//
// Parameters are stored at f32 precision. Values that are exactly
// representable as f32 (everything `train` returns) round-trip bit-exactly;
// wider values are rounded on write. Temperature is written with the
// shortest decimal that round-trips its double value.

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "stakes/error.hpp"
#include "stakes/probe.hpp"

namespace stakes {

struct Probe {
    ProbeConfig config;
    ProbeParams params;

    double logit(const ActivationShard& A) const { return aggregate(A, config, params); }
    double score(const ActivationShard& A) const { return stakes::score(A, config, params); }

    friend bool operator==(const Probe&, const Probe&) = default;
};

namespace detail {

inline std::string hex_f32(std::span<const double> values) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(values.size() * 8);
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int byte = 0; byte < 4; ++byte) {
            const auto b = static_cast<unsigned>((bits >> (8 * byte)) & 0xFFu);
            out.push_back(digits[b >> 4]);
            out.push_back(digits[b & 0xF]);
        }
    }
    return out;
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline std::vector<double> unhex_f32(std::string_view hex, std::size_t expected) {
    require(hex.size() == expected * 8, ErrorKind::Parse,
            "vector has " + std::to_string(hex.size() / 8) + " values, expected " + std::to_string(expected));
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint32_t bits = 0;
        for (int byte = 0; byte < 4; ++byte) {
            const int hi = hex_nibble(hex[i * 8 + byte * 2]);
            const int lo = hex_nibble(hex[i * 8 + byte * 2 + 1]);
            require(hi >= 0 && lo >= 0, ErrorKind::Parse, "invalid hex digit in probe vector");
            bits |= static_cast<std::uint32_t>(hi * 16 + lo) << (8 * byte);
        }
        const float f = std::bit_cast<float>(bits);
        require(std::isfinite(f), ErrorKind::NonFinite, "probe vector contains a non-finite value");
        out[i] = f;
    }
    return out;
}

template <typename T>
std::string shortest(T value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view s, std::string_view key) {
    T value{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), ErrorKind::Parse,
            "cannot parse " + std::string(key) + " value '" + std::string(s) + "'");
    return value;
}

}  // namespace detail

inline std::string format_probe(const Probe& probe) {
    check_params(probe.config, probe.params);
    std::ostringstream out;
    out << "stakes-probe 1\n";
    out << "kind " << to_string(probe.config.kind) << '\n';
    out << "dim " << probe.config.dim << '\n';
    if (probe.config.temperature) out << "temperature " << detail::shortest(*probe.config.temperature) << '\n';
    if (probe.config.window) out << "window " << *probe.config.window << '\n';
    out << "bias " << detail::shortest(static_cast<float>(probe.params.bias)) << '\n';
    out << "direction " << detail::hex_f32(probe.params.direction) << '\n';
    if (probe.config.kind == ProbeKind::Attention) {
        out << "value_direction " << detail::hex_f32(probe.params.value_direction) << '\n';
    }
    return out.str();
}

inline Probe parse_probe(std::istream& in) {
    std::map<std::string, std::string, std::less<>> fields;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto space = line.find(' ');
        require(space != std::string::npos, ErrorKind::Parse,
                "probe file line " + std::to_string(line_no) + " is not 'key value'");
        auto key = line.substr(0, space);
        require(fields.emplace(key, line.substr(space + 1)).second, ErrorKind::Parse,
                "probe file repeats key '" + key + "'");
    }
    auto field = [&](std::string_view key) -> const std::string& {
        const auto it = fields.find(key);
        require(it != fields.end(), ErrorKind::Parse, "probe file is missing '" + std::string(key) + "'");
        return it->second;
    };
    require(field("stakes-probe") == "1", ErrorKind::BadMagic, "unsupported probe file version");
    const auto kind = parse_probe_kind(field("kind"));
    require(kind.has_value(), ErrorKind::Parse, "unknown probe kind '" + field("kind") + "'");

    Probe probe;
    probe.config.kind = *kind;
    probe.config.dim = detail::parse_number<std::size_t>(field("dim"), "dim");
    if (fields.contains("temperature")) {
        probe.config.temperature = detail::parse_number<double>(field("temperature"), "temperature");
    }
    if (fields.contains("window")) {
        probe.config.window = detail::parse_number<std::size_t>(field("window"), "window");
    }
    probe.config.validate();
    probe.params.bias = detail::parse_number<float>(field("bias"), "bias");
    probe.params.direction = detail::unhex_f32(field("direction"), probe.config.dim);
    if (*kind == ProbeKind::Attention) {
        probe.params.value_direction = detail::unhex_f32(field("value_direction"), probe.config.dim);
    } else {
        require(!fields.contains("value_direction"), ErrorKind::Parse,
                "value_direction is only valid for attention probes");
    }
    check_params(probe.config, probe.params);
    return probe;
}

inline void write_probe(const Probe& probe, const std::filesystem::path& destination) {
    const auto text = format_probe(probe);
    std::ofstream out(destination, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + destination.string() + " for writing");
    out << text;
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + destination.string());
}

inline Probe read_probe(const std::filesystem::path& source) {
    std::ifstream in(source);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open probe file " + source.string());
    return parse_probe(in);
}

}  // namespace stakes
