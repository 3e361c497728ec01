#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttgp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

/// An index or argument outside its admissible range.
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

/// A dense materialization would exceed the configured element cap.
class SizeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "size"; }
};

/// Operands with incompatible shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

/// Malformed serialized input. `offset()` is the byte (or line) position at
/// which parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t offset_;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unsupported_version"; }
};

/// A matrix that should have full column rank does not.
class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, long numerical_rank)
      : Error(what), numerical_rank_(numerical_rank) {}
  long numerical_rank() const noexcept { return numerical_rank_; }
  const char* kind() const noexcept override { return "degenerate"; }

 private:
  long numerical_rank_;
};

/// Kernel matrix not positive definite even after the maximal jitter.
class ConditioningError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "conditioning"; }
};

class FitError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "fit"; }
};

/// Non-finite objective during completion.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : Error(what), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }
  const char* kind() const noexcept override { return "divergence"; }

 private:
  long iteration_;
};

/// Black-box evaluation failed; the message names the offending index.
class EvaluationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "evaluation"; }
};

/// Wraps a failure inside a multi-stage pipeline with the stage label.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }
  const char* kind() const noexcept override { return "stage"; }

 private:
  std::string stage_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }
  const char* kind() const noexcept override { return "io"; }

 private:
  std::string path_;
};

}  // namespace ttgp
