#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace l4 {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or on object state was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A loss, gradient or parameter became non-finite during optimization.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step, double last_finite_loss)
      : Error(what), step_(step), last_finite_loss_(last_finite_loss) {}

  std::size_t step() const noexcept { return step_; }
  double last_finite_loss() const noexcept { return last_finite_loss_; }

 private:
  std::size_t step_;
  double last_finite_loss_;
};

/// Malformed input file. Carries the offending field and its byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string field, std::size_t offset)
      : Error(what), field_(std::move(field)), offset_(offset) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string field_;
  std::size_t offset_;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path) : Error(what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A numerical routine failed (e.g. damping left its allowed bracket).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace l4
