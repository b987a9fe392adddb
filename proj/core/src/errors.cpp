#include "cmo/errors.hpp"

namespace cmo {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::DimensionMismatch: return "dimension_mismatch";
        case ErrorKind::Asymmetric: return "asymmetric";
        case ErrorKind::NotPsd: return "not_psd";
        case ErrorKind::NonFinite: return "non_finite";
        case ErrorKind::NoKnee: return "no_knee";
        case ErrorKind::NumericalFailure: return "numerical_failure";
        case ErrorKind::Diverged: return "diverged";
        case ErrorKind::Parse: return "parse_error";
        case ErrorKind::Io: return "io_error";
    }
    return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace cmo
