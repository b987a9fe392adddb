#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmo {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    Asymmetric,
    NotPsd,
    NonFinite,
    NoKnee,
    NumericalFailure,
    Diverged,
    Parse,
    Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for every domain failure; `kind()` selects the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const char* what) {
    if (!cond) fail(kind, what);
}

}  // namespace cmo
