#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kpshift {

// Thrown when tensor extents or ranks do not match an operation's contract.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on malformed serialized data. Carries the byte offset of the
// first offending byte.
struct FormatError : std::runtime_error {
    std::size_t byte_offset;
    FormatError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

// Thrown when a configuration value violates its invariants.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when training diverges (loss became non-finite).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kpshift
