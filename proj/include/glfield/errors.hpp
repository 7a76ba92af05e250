#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glf {

enum class ErrorKind {
    size,
    geometry,
    convexity,
    validation,
    input,
    solver,
    numerical,
    parameter,
    degenerate,
    config,
    integrity,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every library failure is reported through this one exception type; the
/// kind drives the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

} // namespace glf
