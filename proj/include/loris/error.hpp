#pragma once

#include <stdexcept>
#include <string>

namespace loris {

enum class ErrorKind {
  kNonFinite,
  kZeroMatrix,
  kUnsupportedDictionary,
  kDimensionMismatch,
  kEmptyOmega,
  kNoObservations,
  kInvalidArgument,
  kParse,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace loris
