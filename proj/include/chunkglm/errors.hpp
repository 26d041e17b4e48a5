#ifndef CHUNKGLM_ERRORS_HPP
#define CHUNKGLM_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chunkglm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Triangular factor is numerically singular at `column`.
class RankError : public Error {
 public:
  explicit RankError(std::size_t column)
      : Error("rank deficient model matrix at column " + std::to_string(column)),
        column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class NotApplicable : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& what)
      : Error("parse error at data row " + std::to_string(row) + ", column '" +
              column + "': " + what),
        row_(row),
        column_(std::move(column)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class ReadError : public Error {
 public:
  using Error::Error;
};

class NotRewindable : public Error {
 public:
  using Error::Error;
};

class DegreesOfFreedomError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t index, double value)
      : Error("coefficient " + std::to_string(index) + " diverged (|beta| = " +
              std::to_string(value) + ")"),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class DegenerateRegressor : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace chunkglm

#endif  // CHUNKGLM_ERRORS_HPP
