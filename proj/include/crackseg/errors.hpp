///   @file errors.hpp
///   @brief Exception types thrown by the crackseg library.

#ifndef CRACKSEG_ERRORS_HPP
#define CRACKSEG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace crackseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric argument is outside its admissible range.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error("parameter error: " + what) {}
};

/// Two volumes/masks that must share dimensions do not.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

/// A file header names an unknown dtype/kind or is otherwise malformed.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

/// Header and payload disagree, or a payload is truncated.
class CorruptFileError : public Error {
 public:
  explicit CorruptFileError(const std::string& what) : Error("corrupt file: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("i/o error: " + what) {}
};

/// Synthetic data could not be produced with the requested recipe.
class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& what) : Error("generation error: " + what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training error: " + what) {}
};

/// A serialized model does not match what the caller expects.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract error: " + what) {}
};

/// Invalid configuration file, preset name or command line.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

}  // namespace crackseg

#endif  // CRACKSEG_ERRORS_HPP
