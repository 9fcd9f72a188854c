#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace brw {

// Invalid user input: unknown family, malformed table, bad flag values.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// An adaptive integration routine could not reach the requested tolerance.
struct QuadratureFailure : std::runtime_error {
  explicit QuadratureFailure(const std::string& what) : std::runtime_error(what) {}
};

// A simulation or enumeration exceeded its node / work budget.  Carries the
// count reached so callers can report partial progress.
struct BudgetExceeded : std::runtime_error {
  BudgetExceeded(const std::string& what, std::uint64_t reached)
      : std::runtime_error(what), nodes_reached(reached) {}
  std::uint64_t nodes_reached = 0;
};

// A corridor instance would need more lattice states per row than allowed.
struct StateExplosion : std::runtime_error {
  explicit StateExplosion(const std::string& what) : std::runtime_error(what) {}
};

// The two moment constraints of the critical tuning cannot be satisfied for
// the requested mixture parameters.
struct NoBoundarySolution : std::runtime_error {
  explicit NoBoundarySolution(const std::string& what) : std::runtime_error(what) {}
};

// The operation is not defined for this reproduction-law family.
struct UnsupportedFamily : std::runtime_error {
  explicit UnsupportedFamily(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace brw
