#pragma once

#include <stdexcept>
#include <string>

namespace c2m3 {

enum class ErrorCode {
  kInvalidInput = 1,
  kShapeMismatch = 2,
  kParse = 3,
  kIo = 4,
  kNumerical = 5,
  kTraining = 6,
};

// Every failure raised by the library carries one of the codes above; the C
// API maps them one-to-one onto c2m3_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace c2m3
