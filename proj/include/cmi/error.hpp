#pragma once

#include <stdexcept>
#include <string>

namespace cmi {

// Error categories map one-to-one onto CLI exit codes (see tools/cmi_main.cpp).
enum class ErrorKind {
  kConfig,
  kData,
  kNumeric,
  kContract,
  kResource,
  kVersion,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kResource: return "resource";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace cmi
