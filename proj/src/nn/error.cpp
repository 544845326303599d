#include "lgtok/error.hpp"

namespace lgtok {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kBounds: return "bounds";
    case ErrorKind::kSpec: return "spec";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kCountMismatch: return "count_mismatch";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kSampleSize: return "sample_size";
  }
  return "unknown";
}

}  // namespace lgtok
