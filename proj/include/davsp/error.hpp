#pragma once

#include <stdexcept>
#include <string>

namespace davsp {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind {
  usage = 2,
  io = 3,
  numeric = 4,
  remote = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::usage, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorKind::io, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::numeric, msg); }
inline Error remote_error(const std::string& msg) { return Error(ErrorKind::remote, msg); }

}  // namespace davsp
