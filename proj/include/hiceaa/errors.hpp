#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hiceaa {

/// Base of every domain error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- dataset ----------------------------------------------------------------

class FormatError : public Error {
 public:
  enum class Reason { magic, length, label };

  FormatError(Reason reason, const std::string& what) : Error(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

class UnsupportedShape : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  EmptyDataset() : Error("dataset split is empty") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---- resample ---------------------------------------------------------------

class ResampleError : public Error {
 public:
  using Error::Error;
};

// ---- session ----------------------------------------------------------------

class UnknownTrial : public Error {
 public:
  explicit UnknownTrial(const std::string& id) : Error("unknown or expired trial: " + id) {}
};

class DuplicateResponse : public Error {
 public:
  explicit DuplicateResponse(const std::string& id) : Error("trial already answered: " + id) {}
};

class InvalidSelection : public Error {
 public:
  explicit InvalidSelection(int selection)
      : Error("selection out of range [-1, 9]: " + std::to_string(selection)) {}
};

/// A malformed trial-log line. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& detail)
      : Error("line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// ---- analytics --------------------------------------------------------------

class DomainError : public Error {
 public:
  using Error::Error;
};

class DegenerateModel : public Error {
 public:
  DegenerateModel() : Error("sigmoid model has alpha == 0 and cannot be inverted") {}
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace hiceaa
