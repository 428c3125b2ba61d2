#pragma once

#include <stdexcept>
#include <string>

namespace dcwp {

enum class ErrorCode : int {
  invalid_argument = 1,
  shape_mismatch = 2,
  domain = 3,
  io = 4,
  format = 5,
  state = 6,
  numeric = 7,
};

/// Exception carrying a stable error code; the C API maps these to ints.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

// The const char* overload keeps literal-message checks allocation-free on
// the success path; hot per-element loops should branch and build any
// formatted message only on failure.
inline void require(bool cond, ErrorCode code, const char* msg) {
  if (!cond) fail(code, std::string(msg));
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace dcwp
