#pragma once

#include <stdexcept>
#include <string>

namespace sqdm {

// File open/read/write failures; maps to exit code 3 in the CLI.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data, with the byte offset where the problem was detected.
struct parse_error : std::runtime_error {
    std::size_t byte_offset;
    parse_error(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

// Non-finite value surfaced inside a numeric kernel.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sqdm
