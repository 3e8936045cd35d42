#pragma once

#include <stdexcept>
#include <string>

namespace dkm {

/// Root of every error the library throws. The CLI maps all of these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape mismatch, k = 0, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (bad magic, truncated payload, corrupt index).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checksum mismatch on a DKMM/DKMC file.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Inconsistent configuration, e.g. a conv layer without a cluster count.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf, e.g. logits of a blown-up model.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Least-squares fit requested on a constant regressor.
class UndefinedFitError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace dkm
