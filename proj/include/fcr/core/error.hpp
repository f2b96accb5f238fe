#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fcr {

/// Failure categories raised by the library. The CLI maps each onto a
/// process exit code (see exit_code_for).
enum class ErrorKind {
  Usage,            // bad arguments / conflicting options
  InputShape,       // batch shape does not match the model input
  Label,            // label outside [0, K)
  Divergence,       // non-finite loss during training
  OutOfRange,       // coordinate or parameter name out of range
  Corruption,       // checkpoint manifest/blob mismatch
  UnsupportedArch,  // unknown architecture name
  Format,           // malformed file header
  Truncation,       // short read
  Pairing,          // image/label count mismatch
  Domain,           // numeric argument outside its domain
  DegeneratePivot,  // |w_j| below the pivot threshold
  NoViablePivot,    // every candidate pivot is degenerate
  MissingAttribute, // grouping requested without spurious-attribute labels
  Search,           // rate search preconditions violated
  EmptySplit,       // evaluation over an empty dataset
  UnsortedGrid,     // sweep grid not strictly increasing
  Io,               // filesystem failure
  MissingInput,     // required input file absent
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::InputShape: return "input-shape";
    case ErrorKind::Label: return "label";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::UnsupportedArch: return "unsupported-arch";
    case ErrorKind::Format: return "format";
    case ErrorKind::Truncation: return "truncation";
    case ErrorKind::Pairing: return "pairing";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::DegeneratePivot: return "degenerate-pivot";
    case ErrorKind::NoViablePivot: return "no-viable-pivot";
    case ErrorKind::MissingAttribute: return "missing-attribute";
    case ErrorKind::Search: return "search";
    case ErrorKind::EmptySplit: return "empty-split";
    case ErrorKind::UnsortedGrid: return "unsorted-grid";
    case ErrorKind::Io: return "io";
    case ErrorKind::MissingInput: return "missing-input";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// 0 success, 1 usage, 2 missing input, 3 incompatible artifact, 4 numeric failure.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Domain:
    case ErrorKind::UnsortedGrid:
    case ErrorKind::OutOfRange:
    case ErrorKind::Label:
      return 1;
    case ErrorKind::MissingInput:
    case ErrorKind::Io:
      return 2;
    case ErrorKind::InputShape:
    case ErrorKind::Corruption:
    case ErrorKind::UnsupportedArch:
    case ErrorKind::Format:
    case ErrorKind::Truncation:
    case ErrorKind::Pairing:
    case ErrorKind::MissingAttribute:
      return 3;
    case ErrorKind::Divergence:
    case ErrorKind::DegeneratePivot:
    case ErrorKind::NoViablePivot:
    case ErrorKind::Search:
    case ErrorKind::EmptySplit:
      return 4;
  }
  return 4;
}

}  // namespace fcr
