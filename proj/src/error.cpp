#include "loris/error.hpp"

namespace loris {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kZeroMatrix: return "ZeroMatrix";
    case ErrorKind::kUnsupportedDictionary: return "UnsupportedDictionary";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kEmptyOmega: return "EmptyOmega";
    case ErrorKind::kNoObservations: return "NoObservations";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kParse: return "Parse";
  }
  return "Unknown";
}

}  // namespace loris
