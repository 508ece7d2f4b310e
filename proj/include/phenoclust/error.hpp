#pragma once

#include <stdexcept>
#include <string>

namespace phenoclust {

enum class Errc {
    invalid_volume,
    empty_mask,
    constant_region,
    insufficient_pairs,
    malformed_input,
    duplicate_id,
    schema,
    architecture,
    shape,
    contract,
    insufficient_data,
    io,
    // numeric / convergence failures below
    singular_covariance,
    degenerate_model,
    fit_failure,
    separation,
    collinearity,
    no_comparable_pairs,
    numeric,
};

const char* errc_name(Errc code) noexcept;

/// Library-wide exception. The code decides whether the failure is a
/// validation problem (bad input, violated precondition) or a numeric one
/// (singular matrices, non-convergence); the CLI maps these to exit codes 2
/// and 3 respectively.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what);

    Errc code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }
    bool is_numeric() const noexcept { return code_ >= Errc::singular_covariance; }

private:
    Errc code_;
    std::string message_;
};

/// Prefixes the message of `e` with a stage label, keeping its code.
Error with_stage(const std::string& stage, const Error& e);

}  // namespace phenoclust
