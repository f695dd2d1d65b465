#pragma once

#include <stdexcept>
#include <string>

namespace tolcal {

enum class ErrorKind {
  invalid_input,
  empty_input,
  parse,
  range,
  degenerate_fit,
  undefined_correlation,
  insufficient_data,
  missing_evidence,
  auth,
  transport,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tolcal
