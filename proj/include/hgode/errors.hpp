#pragma once

#include <stdexcept>
#include <string>

namespace hgode {

// Numeric values are part of the C ABI (see hgode.h); append only.
enum class ErrorCode : int {
  ok = 0,
  invalid_argument = 1,
  zero_row = 2,
  pool_overflow = 3,
  max_steps_exceeded = 4,
  step_underflow = 5,
  invalid_scale = 6,
  non_finite_loss = 7,
  degenerate_cluster = 8,
  not_irreducible = 9,
  no_convergence = 10,
  eigen_failure = 11,
  parse_error = 12,
  range_error = 13,
  io_error = 14,
  precondition = 15,
  internal = 16,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define HGODE_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(Code, message) {}  \
  };

HGODE_DEFINE_ERROR(InvalidArgument, ErrorCode::invalid_argument)
HGODE_DEFINE_ERROR(ZeroRowError, ErrorCode::zero_row)
HGODE_DEFINE_ERROR(PoolOverflowError, ErrorCode::pool_overflow)
HGODE_DEFINE_ERROR(MaxStepsExceeded, ErrorCode::max_steps_exceeded)
HGODE_DEFINE_ERROR(StepUnderflow, ErrorCode::step_underflow)
HGODE_DEFINE_ERROR(InvalidScale, ErrorCode::invalid_scale)
HGODE_DEFINE_ERROR(DegenerateClusterError, ErrorCode::degenerate_cluster)
HGODE_DEFINE_ERROR(NotIrreducible, ErrorCode::not_irreducible)
HGODE_DEFINE_ERROR(NoConvergence, ErrorCode::no_convergence)
HGODE_DEFINE_ERROR(EigenFailure, ErrorCode::eigen_failure)
HGODE_DEFINE_ERROR(RangeError, ErrorCode::range_error)
HGODE_DEFINE_ERROR(IoError, ErrorCode::io_error)
HGODE_DEFINE_ERROR(PreconditionError, ErrorCode::precondition)

#undef HGODE_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& message)
      : Error(ErrorCode::parse_error,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(int epoch)
      : Error(ErrorCode::non_finite_loss,
              "non-finite loss at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace hgode
