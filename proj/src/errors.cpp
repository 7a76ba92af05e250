#include "glfield/errors.hpp"

namespace glf {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::size: return "size";
    case ErrorKind::geometry: return "geometry";
    case ErrorKind::convexity: return "convexity";
    case ErrorKind::validation: return "validation";
    case ErrorKind::input: return "input";
    case ErrorKind::solver: return "solver";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::config: return "config";
    case ErrorKind::integrity: return "integrity";
    }
    return "unknown";
}

} // namespace glf
