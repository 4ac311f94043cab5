#pragma once

#include <stdexcept>
#include <string>

namespace sapp {

enum class ErrorKind {
  config,       // invalid or mismatched configuration
  io,           // unreadable path, failed write
  parse,        // malformed input payload
  not_found,    // unknown id
  conflict,     // operation rejected because of current state
  unavailable,  // service not ready / upstream unreachable
  truncated,    // input stream ended early
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sapp
