#pragma once

#include <stdexcept>
#include <string>

namespace gsan {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or filter-bank shapes that do not line up. `axis` names the
// offending dimension ("channels", "height", "weights", ...).
class DimensionError : public Error {
 public:
  DimensionError(std::string axis, const std::string& what)
      : Error("dimension error [" + axis + "]: " + what), axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

// A value outside its documented domain (non-finite proxy, bad label, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed or semantically inconsistent configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, int line = 0, int column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, int line, int column) {
    if (line <= 0) return what;
    std::string out = "line " + std::to_string(line);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  int line_;
  int column_;
};

// File-system or stream failure. Carries the path and, where it makes
// sense, the byte offset at which reading stopped.
class IoError : public Error {
 public:
  IoError(std::string path, const std::string& what, long long offset = -1)
      : Error(format(path, what, offset)), path_(std::move(path)), offset_(offset) {}

  const std::string& path() const noexcept { return path_; }
  long long offset() const noexcept { return offset_; }

 private:
  static std::string format(const std::string& path, const std::string& what, long long offset) {
    std::string out = path + ": " + what;
    if (offset >= 0) out += " (offset " + std::to_string(offset) + ")";
    return out;
  }

  std::string path_;
  long long offset_;
};

// A file whose bytes do not follow the expected binary layout.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace gsan
