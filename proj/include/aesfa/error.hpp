#pragma once

#include <stdexcept>
#include <string>

namespace aesfa {

// Shape/range/precondition violations on operation inputs.
using InvalidArgument = std::invalid_argument;

// Filesystem or decode failure; the message always names the offending path.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed, truncated, or version-mismatched checkpoint container.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unusable run configuration (empty dataset, bad directory, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace aesfa
