#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fastpfrec {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line_number)
      : std::runtime_error(what + " (line " + std::to_string(line_number) + ")"),
        line(line_number) {}
  std::size_t line;
};

struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyBatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyEvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BoundsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fastpfrec
