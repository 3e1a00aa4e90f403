// error.hpp — exception type shared by all cavmodes modules

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cavmodes {

enum class ErrorKind {
    invalid_argument,
    step_size,          // jump probability above the allowed ceiling
    zero_norm,          // jump applied to a state with no photons
    no_samples,         // steady-state average has nothing past the cutoff
    schedule_mismatch,  // ensemble members sampled on different grids
    basis_mismatch,
    degenerate_field,   // <a^2> too small for the coherent-mixture fit
    undefined,          // e.g. Mandel Q of the vacuum
    decomposition_undefined,
    model_mismatch,
    invariant_violation,
    truncation_edge,
    not_converged,
    io,
    config,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::step_size: return "step_size";
        case ErrorKind::zero_norm: return "zero_norm";
        case ErrorKind::no_samples: return "no_samples";
        case ErrorKind::schedule_mismatch: return "schedule_mismatch";
        case ErrorKind::basis_mismatch: return "basis_mismatch";
        case ErrorKind::degenerate_field: return "degenerate_field";
        case ErrorKind::undefined: return "undefined";
        case ErrorKind::decomposition_undefined: return "decomposition_undefined";
        case ErrorKind::model_mismatch: return "model_mismatch";
        case ErrorKind::invariant_violation: return "invariant_violation";
        case ErrorKind::truncation_edge: return "truncation_edge";
        case ErrorKind::not_converged: return "not_converged";
        case ErrorKind::io: return "io";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

} // namespace cavmodes
