#pragma once

#include <stdexcept>
#include <string>

namespace squanv {

/// Invalid shape, index, or configuration value supplied by the caller.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or unreadable dataset/checkpoint file.
class IngestError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
    if (!cond) {
        throw ConfigError(msg);
    }
}

} // namespace squanv
