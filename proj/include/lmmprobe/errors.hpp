#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lmmprobe {

// Base error type; what() is "[module] message" so callers can report provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error("[" + module + "] " + message), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& m) : Error("schema", m) {}
};

struct IngestionError : Error {
  explicit IngestionError(const std::string& m) : Error("ingestion", m) {}
};

struct DataError : Error {
  explicit DataError(const std::string& m) : Error("data", m) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& m) : Error("numeric", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

}  // namespace lmmprobe
