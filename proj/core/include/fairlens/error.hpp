#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fairlens {

// Base of every exception thrown by the library. The CLI maps `Error`
// subclasses onto exit codes: validation-style errors exit 1, everything
// else exits 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Schema file or dataset header is inconsistent.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A data row violates its declared domain.
class ValidationError : public Error {
 public:
  ValidationError(std::string message, std::size_t row)
      : Error(std::move(message)), row_(row) {}
  explicit ValidationError(std::string message)
      : Error(std::move(message)), row_(kNoRow) {}

  static constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Invalid argument combination or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given data, e.g. an empty protected group.
class MetricError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(std::string message, int epoch)
      : Error(std::move(message)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

// Malformed or incompatible model / artifact file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairlens
