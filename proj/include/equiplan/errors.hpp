#pragma once

#include <stdexcept>
#include <string>

namespace equiplan {

// Invalid user-supplied configuration or data (CLI exit code 1).
struct validation_error : std::runtime_error {
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / parsing failures (CLI exit code 2).
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (CLI exit code 3).
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken caller contract: shape mismatches, non-scalar loss, bad indices.
struct contract_error : std::logic_error {
    explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace equiplan
