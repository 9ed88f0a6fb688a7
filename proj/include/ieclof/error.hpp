#pragma once

#include <stdexcept>
#include <string>

namespace ieclof {

// Broad failure classes. The CLI maps them onto exit codes.
enum class ErrorKind {
  usage,  // bad arguments, inconsistent configuration, missing input file
  data,   // malformed or semantically invalid input data
  io,     // read/write failure on an otherwise valid path
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return {ErrorKind::usage, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::data, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::io, what}; }

}  // namespace ieclof
