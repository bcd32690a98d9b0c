#pragma once

#include <stdexcept>
#include <string>

namespace frar {

// File could not be opened, read, or written.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A file opened fine but its contents are not what they claim to be.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// An operation was invoked that the active configuration does not provide
// (e.g. stream fusion on a single-stream model).
struct ConfigMismatch : std::logic_error {
  explicit ConfigMismatch(const std::string& msg) : std::logic_error(msg) {}
};

// Sampling from a replay memory that holds no transitions.
struct EmptyBuffer : std::runtime_error {
  explicit EmptyBuffer(const std::string& msg) : std::runtime_error(msg) {}
};

// Reward requested over zero validation puzzles.
struct EmptyValidationSet : std::runtime_error {
  explicit EmptyValidationSet(const std::string& msg) : std::runtime_error(msg) {}
};

// A batch mixture assigns positive probability to a category with no puzzles.
struct EmptyCategory : std::runtime_error {
  explicit EmptyCategory(const std::string& msg) : std::runtime_error(msg) {}
};

// Evaluation requested over an empty puzzle pool.
struct EmptyPool : std::runtime_error {
  explicit EmptyPool(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace frar
