#pragma once

#include <stdexcept>
#include <string>

namespace bcm {

// Bad input: malformed configuration, violated preconditions on user data.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A computation could not produce a trustworthy result.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace bcm
