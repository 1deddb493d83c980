#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hnclass {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (k = 0, empty corpus, bad fractions).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller misuse that is not a configuration problem, e.g. mismatched lengths.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Data that fails validation: out-of-range ids, bad checkpoints, bad files.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during a forward pass or training step.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(what) {}

  DivergenceError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}

  std::optional<std::size_t> epoch() const noexcept { return epoch_; }
  std::optional<std::size_t> batch() const noexcept { return batch_; }

 private:
  std::optional<std::size_t> epoch_;
  std::optional<std::size_t> batch_;
};

}  // namespace hnclass
