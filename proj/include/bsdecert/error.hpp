#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace bsdecert {

enum class ErrorKind {
    InvalidArgument,
    InvalidModulus,
    HorizonRejected,
    CertificationFailed,
    GateFailed,
    Divergence,
    Config,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base of every exception thrown by the library. `field` names the offending
/// input (config key, integrand name, ...) when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string field = {})
        : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}
    Error(ErrorKind kind, const std::string& message, std::string field, double value)
        : std::runtime_error(message), kind_(kind), field_(std::move(field)), value_(value) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }
    /// Computed quantity behind the failure (gate integral, diverging distance).
    std::optional<double> value() const noexcept { return value_; }

private:
    ErrorKind kind_;
    std::string field_;
    std::optional<double> value_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message, std::string field = {}) {
    throw Error(kind, message, std::move(field));
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message, std::string field, double value) {
    throw Error(kind, message, std::move(field), value);
}

inline void require(bool cond, const std::string& message, std::string field = {}) {
    if (!cond) fail(ErrorKind::InvalidArgument, message, std::move(field));
}

}  // namespace bsdecert
