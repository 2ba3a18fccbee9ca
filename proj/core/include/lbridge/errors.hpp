#pragma once

#include <stdexcept>
#include <string>

namespace lbridge {

// Shape/contract violations: mismatched dimensions, empty inputs, bad ranges.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent external data: files, magic numbers, truncation.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lbridge
