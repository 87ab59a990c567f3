#pragma once

#include <stdexcept>
#include <string>

namespace n2 {

/// Tensor or token-grid geometry does not match what an operation expects.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (model, training, CLI overrides).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is malformed: non-finite intensities, out-of-domain values,
/// unreadable files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// DICOM / RT Structure Set ingestion failure.
class IngestionError : public DataError {
 public:
  using DataError::DataError;
};

/// Optimization or inference failure (e.g. non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace n2
