#include "bsdecert/error.hpp"

namespace bsdecert {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::InvalidModulus: return "invalid_modulus";
        case ErrorKind::HorizonRejected: return "horizon_rejected";
        case ErrorKind::CertificationFailed: return "certification_failed";
        case ErrorKind::GateFailed: return "gate_failed";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace bsdecert
