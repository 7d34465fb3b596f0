#pragma once

#include <stdexcept>
#include <string>

namespace mcen {

enum class ErrorKind {
    ZeroVarianceColumn,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidArgument,
    SingularGram,
    DegenerateInput,
    SeparationDetected,
    InvalidK,
    UnsupportedP,
    ParseError,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (CV grid,
// CLI) can decide between skipping a cell and aborting.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::SingularGram: return "SingularGram";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::SeparationDetected: return "SeparationDetected";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::UnsupportedP: return "UnsupportedP";
    case ErrorKind::ParseError: return "ParseError";
    }
    return "Unknown";
}

}  // namespace mcen
