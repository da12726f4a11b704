#pragma once

#include <stdexcept>
#include <string>

namespace fdaw {

// Category of a failure. The server maps these onto HTTP status codes and
// the CLI onto exit codes.
enum class ErrorKind {
  invalid_argument,  // bad input data or options
  degenerate,        // data admit no positive variance / identifiable model
  not_found,         // unknown subject, term, model id
  kind_mismatch,     // operation requested on the wrong model kind
  numerical,         // singular system that cannot be regularized
  io
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(ErrorKind::invalid_argument, what); }
[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace fdaw
