#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmlimit {

enum class ErrorCode {
  NonPositiveRate,
  NonPositiveDiffusivity,
  NegativeL2,
  InvalidGrid,
  SizeMismatch,
  InvalidExponent,
  NotDiagonallyDominant,
  ZeroPivot,
  MaxIterExceeded,
  NonFiniteState,
  NegativeState,
  CflViolation,
  TooFewPoints,
  NonPositiveValue,
  InvalidSpec,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mmlimit
