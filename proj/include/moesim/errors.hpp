#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace moesim {

// Index outside [0, L) or [0, E).
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Vectors of incompatible length.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration or a predictor used without the state it needs.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed input file. line() is 1-based; 0 means the error is not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace moesim
