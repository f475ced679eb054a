#pragma once

#include <stdexcept>
#include <string>

namespace cssim {

enum class ErrorKind {
  kFormat,      // bad magic, version, or schema
  kCorruption,  // truncated or inconsistent payload
  kValidation,  // input violates a documented precondition
  kDegenerate,  // vector norm or variance at or below threshold
  kLookup,      // unknown image ID
  kIo,          // filesystem failure
  kDivergence,  // non-finite loss or gradient
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define CSSIM_DEFINE_ERROR(Name, Kind) \
  class Name : public Error {          \
   public:                             \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

CSSIM_DEFINE_ERROR(FormatError, kFormat)
CSSIM_DEFINE_ERROR(CorruptionError, kCorruption)
CSSIM_DEFINE_ERROR(ValidationError, kValidation)
CSSIM_DEFINE_ERROR(DegenerateError, kDegenerate)
CSSIM_DEFINE_ERROR(LookupError, kLookup)
CSSIM_DEFINE_ERROR(IoError, kIo)

#undef CSSIM_DEFINE_ERROR

}  // namespace cssim
