#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stakes {

enum class ErrorKind {
    Io,                 // open/read/write failure
    BadMagic,           // shard magic or version mismatch
    Truncated,          // payload shorter than the header promises
    NonFinite,          // NaN or Inf where finite values are required
    Parse,              // malformed text record
    DuplicateId,        // example_id repeated within a manifest
    DimensionMismatch,  // activation dim does not match probe dim
    InvalidArgument,    // precondition violated by caller input
    MissingData,        // a required record, score, or shard is absent
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "io";
        case ErrorKind::BadMagic: return "bad-magic";
        case ErrorKind::Truncated: return "truncated";
        case ErrorKind::NonFinite: return "non-finite";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::DuplicateId: return "duplicate-id";
        case ErrorKind::DimensionMismatch: return "dimension-mismatch";
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::MissingData: return "missing-data";
    }
    return "unknown";
}

/// Every failure caused by bad input surfaces as this type. Anything else
/// escaping the library is a bug.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// Message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

}  // namespace stakes
