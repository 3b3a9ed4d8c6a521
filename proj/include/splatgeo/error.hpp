#pragma once

#include <stdexcept>
#include <string>

namespace splatgeo {

enum class ErrorKind {
  ZeroBaseline,
  NonPositiveDepth,
  ShapeMismatch,
  StateMismatch,
  BadInit,
  NonFiniteGradient,
  Diverged,
  EmptyRender,
  ManifestMissing,
  CorruptImage,
  DimensionMismatch,
  LengthMismatch,
  IoFailure,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

// All domain failures surface as this exception; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace splatgeo
