#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace picard {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters, shapes or descriptors.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API called in the wrong order or with unusable arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Heatmaps and annotations that cannot be paired by id.
class PairingError : public UsageError {
 public:
  using UsageError::UsageError;
};

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(std::size_t iteration, const std::string& what)
      : Error("training diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class AnnotationError : public Error {
 public:
  using Error::Error;
};

// AUC / AP requested on labels that do not define them.
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace picard
