#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smoothcal {

// Every failure raised by the core derives from Error so the C boundary can
// map it onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Refused because the requested problem is too large for the routine.
class SizeError : public Error {
 public:
  using Error::Error;
};

// A numerical invariant that should hold by construction did not.
class InternalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// CSV / data load failure. Row and column are 1-based; 0 means "not
// applicable" (e.g. an empty file has no offending row).
class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace smoothcal
