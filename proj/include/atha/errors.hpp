#pragma once

#include <stdexcept>
#include <string>

namespace atha {

// Error categories map onto CLI exit codes: config -> 2, io -> 3, numeric -> 4.
// Shape/index errors are programming-contract violations and surface as
// shape_error / index_error wherever an operation's preconditions fail.

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct shape_error : std::invalid_argument {
    explicit shape_error(const std::string& msg) : std::invalid_argument(msg) {}
};

struct index_error : std::out_of_range {
    explicit index_error(const std::string& msg) : std::out_of_range(msg) {}
};

}  // namespace atha
