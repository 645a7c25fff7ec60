#pragma once

#include <stdexcept>
#include <string>

namespace tvs {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration (bad schedule, impossible capacities, malformed keys).
// Reported before any compute starts.
struct ConfigError : Error {
  using Error::Error;
};

// A caller broke a documented precondition (empty state set, stale joints).
struct ContractViolation : Error {
  using Error::Error;
};

// Every cached log-joint of a datapoint's state set is -inf.
struct DegenerateJointError : Error {
  using Error::Error;
};

// Sufficient statistics too degenerate to solve the dictionary system.
struct SingularStatsError : Error {
  using Error::Error;
};

// An optimizer produced non-finite parameters or loss.
struct DivergenceError : Error {
  using Error::Error;
};

// Enumeration requested for a latent space too large to enumerate.
struct CapacityError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace tvs
