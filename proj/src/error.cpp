#include "phenoclust/error.hpp"

namespace phenoclust {

const char* errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_volume: return "invalid-volume";
        case Errc::empty_mask: return "empty-mask";
        case Errc::constant_region: return "constant-region";
        case Errc::insufficient_pairs: return "insufficient-pairs";
        case Errc::malformed_input: return "malformed-input";
        case Errc::duplicate_id: return "duplicate-id";
        case Errc::schema: return "schema";
        case Errc::architecture: return "architecture";
        case Errc::shape: return "shape";
        case Errc::contract: return "contract-violation";
        case Errc::insufficient_data: return "insufficient-data";
        case Errc::io: return "io";
        case Errc::singular_covariance: return "singular-covariance";
        case Errc::degenerate_model: return "degenerate-model";
        case Errc::fit_failure: return "fit-failure";
        case Errc::separation: return "separation";
        case Errc::collinearity: return "collinearity";
        case Errc::no_comparable_pairs: return "no-comparable-pairs";
        case Errc::numeric: return "numeric";
    }
    return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), message_(what) {}

Error with_stage(const std::string& stage, const Error& e) {
    return Error(e.code(), "[" + stage + "] " + e.message());
}

}  // namespace phenoclust
