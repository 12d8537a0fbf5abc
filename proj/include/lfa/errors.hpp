#pragma once

#include <stdexcept>
#include <string>

namespace lfa {

// Base for every error thrown by the library. The CLI maps subclasses to
// exit codes (see tools/lfa.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public Error {
 public:
  using Error::Error;
};

class CheckpointIntegrityError : public Error {
 public:
  using Error::Error;
};

// A loss went non-finite during training.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string loss, int epoch)
      : Error("non-finite loss '" + loss + "' at epoch " + std::to_string(epoch)),
        loss_(std::move(loss)),
        epoch_(epoch) {}

  const std::string& loss() const noexcept { return loss_; }
  int epoch() const noexcept { return epoch_; }

 private:
  std::string loss_;
  int epoch_;
};

}  // namespace lfa
