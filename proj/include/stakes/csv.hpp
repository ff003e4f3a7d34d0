#pragma once

// Minimal RFC 4180 style CSV output.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "stakes/error.hpp"
#include "stakes/probe_io.hpp"

namespace stakes {

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_number(double v) { return detail::shortest(v); }

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
        : path_(path), out_(path, std::ios::trunc), columns_(header.size()) {
        require(static_cast<bool>(out_), ErrorKind::Io, "cannot open " + path.string() + " for writing");
        write(std::vector<std::string>(header.begin(), header.end()));
    }

    void write(const std::vector<std::string>& fields) {
        require(fields.size() == columns_, ErrorKind::InvalidArgument, "csv row width does not match header");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_field(fields[i]);
        }
        out_ << '\n';
        require(static_cast<bool>(out_), ErrorKind::Io, "write failed for " + path_.string());
    }

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t columns_;
};

}  // namespace stakes
