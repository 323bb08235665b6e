#pragma once

#include <stdexcept>
#include <string>

namespace rid {

// Invalid values flowing through an otherwise well-configured pipeline.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally impossible configuration (bad resolution, dim mismatch in setup).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing prerequisite state (untrained model, absent checkpoint).
struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / codec failures.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rid
