#pragma once

#include <stdexcept>
#include <string>

namespace dualres {

// All library failures derive from Error so callers (CLI, bindings) can map
// any failure to a single-line message with a stable kind prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error("domain", m) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

struct AlignmentError : Error {
  explicit AlignmentError(const std::string& m) : Error("alignment", m) {}
};

struct ContextOverflowError : Error {
  explicit ContextOverflowError(const std::string& m) : Error("context_overflow", m) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& m) : Error("checkpoint", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace dualres
