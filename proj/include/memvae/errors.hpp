#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace memvae {

// Shape/dimension mismatches (matmul, broadcasting, KL support, ...).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numeric domain violations (log of non-positive input, non-binary pixels, ...).
// Carries the flat index of the offending element where one exists.
struct DomainError : std::domain_error {
    DomainError(const std::string& what, std::size_t index)
        : std::domain_error(what), index(index) {}
    explicit DomainError(const std::string& what) : std::domain_error(what), index(0) {}
    std::size_t index;
};

// Malformed input files (IDX streams, PGM images). Carries the byte offset
// at which parsing failed.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
          offset(offset) {}
    std::size_t offset;
};

// Bad run configuration (unknown key, unparsable value, missing file).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runtime numerical failure (NaN loss, tolerance exceeded). CLI maps this
// to exit code 2.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace memvae
