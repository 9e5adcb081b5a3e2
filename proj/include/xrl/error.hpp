#pragma once

#include <stdexcept>
#include <string>

namespace xrl {

/// Base of every error raised by the library. `category()` is a stable
/// machine-readable tag used by the service and the CLI to map errors onto
/// status codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept = 0;
};

#define XRL_DEFINE_ERROR(Name, tag)                                           \
  class Name : public Error {                                                 \
  public:                                                                     \
    using Error::Error;                                                       \
    const char* category() const noexcept override { return tag; }            \
  }

XRL_DEFINE_ERROR(ConfigError, "config");
XRL_DEFINE_ERROR(ParseError, "parse");
XRL_DEFINE_ERROR(ValidationError, "validation");
XRL_DEFINE_ERROR(PreconditionError, "precondition");
XRL_DEFINE_ERROR(NumericError, "numeric");
XRL_DEFINE_ERROR(DivergenceError, "divergence");
XRL_DEFINE_ERROR(LoadError, "load");
XRL_DEFINE_ERROR(IoError, "io");
XRL_DEFINE_ERROR(NotFoundError, "not_found");
XRL_DEFINE_ERROR(ConflictError, "conflict");
XRL_DEFINE_ERROR(GoneError, "gone");
XRL_DEFINE_ERROR(MethodError, "method_not_allowed");

#undef XRL_DEFINE_ERROR

}  // namespace xrl
