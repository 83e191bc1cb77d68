#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace devmine {

/// Broad failure classes. The CLI maps them onto exit codes.
enum class ErrorCode {
  input,   // unreadable or undecodable source
  config,  // bad option, unknown format tag, out-of-range parameter
  schema,  // heterogeneous or malformed tables
  data,    // well-formed but degenerate data (empty log, one class, ...)
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::input: return "input";
    case ErrorCode::config: return "config";
    case ErrorCode::schema: return "schema";
    case ErrorCode::data: return "data";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& m) : Error(ErrorCode::input, m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorCode::config, m) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& m) : Error(ErrorCode::schema, m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error(ErrorCode::data, m) {}
};

}  // namespace devmine
