#pragma once

#include <stdexcept>
#include <string>

namespace gendetect {

enum class ErrorCode {
  invalid_argument = 1,
  shape = 2,
  format = 3,
  io = 4,
  not_found = 5,
  numeric = 6,
  state = 7,
  internal = 8,
};

// Single exception type for the core library. The C API maps `code()` onto
// gd_status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace gendetect
