#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace convotts {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: config/usage -> 1, data -> 2, divergence -> 3.

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VocabError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : DataError {
    ParseError(const std::string& msg, std::size_t line)
        : DataError(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    std::size_t line_number;
};

struct ValidationError : DataError {
    using DataError::DataError;
};

struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& msg, std::size_t epoch)
        : std::runtime_error(msg + " (epoch " + std::to_string(epoch) + ")"), epoch(epoch) {}
    std::size_t epoch;
};

}  // namespace convotts
