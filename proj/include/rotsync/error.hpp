#pragma once

#include <stdexcept>
#include <string>

namespace rotsync {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structural problems with a view graph: self-loops, duplicate pairs,
/// disconnected input where connectivity is required, empty graphs.
class GraphError : public Error {
 public:
  using Error::Error;
};

class MissingEdgeError : public GraphError {
 public:
  MissingEdgeError(std::size_t i, std::size_t j)
      : GraphError("no edge between nodes " + std::to_string(i) + " and " +
                   std::to_string(j)),
        i_(i),
        j_(j) {}

  std::size_t first() const { return i_; }
  std::size_t second() const { return j_; }

 private:
  std::size_t i_;
  std::size_t j_;
};

/// Malformed input files. The message carries "source:line: ..." when a
/// line number is known.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  ParseError(const std::string& source, const std::string& what)
      : Error(source + ": " + what), line_(0) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rotsync
