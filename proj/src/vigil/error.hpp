#ifndef VIGIL_ERROR_HPP
#define VIGIL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace vigil {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Format,
  Dimension,
  UnknownMethod,
  SingleClass,
  Numeric,
  Internal,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Dimension: return "dimension";
    case ErrorCode::UnknownMethod: return "unknown_method";
    case ErrorCode::SingleClass: return "single_class";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Internal: return "internal";
  }
  return "internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace vigil

#endif
