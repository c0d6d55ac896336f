#pragma once

#include <stdexcept>
#include <string>

namespace mgt {

/// Process exit codes, one per error class. Documented in README.md.
enum class ExitCode : int {
  ok = 0,
  internal = 1,
  usage = 2,
  config = 3,
  stage_order = 4,
  drift = 5,
  integrity = 6,
  parse = 7,
  numeric = 8,
  sampling = 9,
  contract = 10,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode exit_code() const { return ExitCode::internal; }
};

#define MGT_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(what) {}            \
    ExitCode exit_code() const override { return ExitCode::Code; }     \
  };

// Violated precondition at an API boundary.
MGT_DEFINE_ERROR(ContractError, contract)
// Tensor shapes that do not compose.
MGT_DEFINE_ERROR(DimensionError, contract)
// Input outside an operation's mathematical domain.
MGT_DEFINE_ERROR(DomainError, contract)
// NaN/Inf produced or training diverged.
MGT_DEFINE_ERROR(NumericError, numeric)
MGT_DEFINE_ERROR(ConfigError, config)
MGT_DEFINE_ERROR(ParseError, parse)
MGT_DEFINE_ERROR(EmptyCorpusError, parse)
MGT_DEFINE_ERROR(IntegrityError, integrity)
MGT_DEFINE_ERROR(SamplingError, sampling)
MGT_DEFINE_ERROR(StageOrderError, stage_order)
MGT_DEFINE_ERROR(DriftError, drift)

#undef MGT_DEFINE_ERROR

}  // namespace mgt
