#include "dbm/error.hpp"

namespace dbm {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidDims: return "InvalidDims";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::CenterSamplingFailed: return "CenterSamplingFailed";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SingularScatter: return "SingularScatter";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

}  // namespace dbm
