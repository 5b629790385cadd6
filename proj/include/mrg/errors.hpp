#pragma once

#include <stdexcept>
#include <string>

namespace mrg {

// Broad failure classes, mapped one-to-one onto CLI exit codes.
enum class ErrorCategory { config, ingest, engine, io };

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::ingest: return "ingest";
    case ErrorCategory::engine: return "engine";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::ingest: return 3;
    case ErrorCategory::engine: return 4;
    case ErrorCategory::io: return 5;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorCategory::config, message) {}
};

class IngestError : public Error {
 public:
  explicit IngestError(const std::string& message)
      : Error(ErrorCategory::ingest, message) {}
};

class EngineError : public Error {
 public:
  explicit EngineError(const std::string& message)
      : Error(ErrorCategory::engine, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message)
      : Error(ErrorCategory::io, message) {}
};

// Invalid grid geometry (resolutions, points on cell borders, ...).
class GridError : public EngineError {
 public:
  explicit GridError(const std::string& message) : EngineError(message) {}
};

// A request references data the current grid cannot satisfy, e.g. a record
// that falls outside every disclosed cell when matching a published layout.
class SpecMismatch : public EngineError {
 public:
  explicit SpecMismatch(const std::string& message) : EngineError(message) {}
};

}  // namespace mrg
