#include "hgode/errors.hpp"

namespace hgode {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ok: return "ok";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::zero_row: return "zero_row";
    case ErrorCode::pool_overflow: return "pool_overflow";
    case ErrorCode::max_steps_exceeded: return "max_steps_exceeded";
    case ErrorCode::step_underflow: return "step_underflow";
    case ErrorCode::invalid_scale: return "invalid_scale";
    case ErrorCode::non_finite_loss: return "non_finite_loss";
    case ErrorCode::degenerate_cluster: return "degenerate_cluster";
    case ErrorCode::not_irreducible: return "not_irreducible";
    case ErrorCode::no_convergence: return "no_convergence";
    case ErrorCode::eigen_failure: return "eigen_failure";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::range_error: return "range_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace hgode
