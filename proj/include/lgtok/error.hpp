#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lgtok {

// Error categories. The CLI maps each category onto a process exit code.
enum class ErrorKind {
  kUsage,       // misuse of an API or command line
  kConfig,      // inconsistent configuration or incompatible checkpoints
  kShape,       // tensor shape mismatch
  kBounds,      // value outside its permitted range
  kSpec,        // malformed user-supplied specification string
  kIo,          // filesystem failure
  kFormat,      // corrupted or unrecognised file contents
  kVersion,     // file written by an incompatible version
  kTruncated,   // file ends before its declared content
  kCountMismatch,
  kData,        // invalid data values (e.g. token index >= V)
  kNumeric,     // non-finite values during training
  kSampleSize,  // too few samples for a statistic
};

std::string_view to_string(ErrorKind kind);

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

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace lgtok
