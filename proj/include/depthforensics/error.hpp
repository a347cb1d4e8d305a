#pragma once

#include <stdexcept>
#include <string>

namespace dfx {

enum class ErrorCode {
  InvalidArgument = 1,  // contract violation by the caller
  Io = 2,
  Format = 3,  // corrupt, truncated or version-mismatched files
  Numeric = 4,  // non-finite values during compute
  State = 5,
  Internal = 6,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(ErrorCode::InvalidArgument, msg);
}

}  // namespace dfx
