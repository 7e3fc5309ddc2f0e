#pragma once

#include <stdexcept>
#include <string>

namespace flexgrid {

/// Base class for everything this library throws on purpose.
class FlexgridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent user configuration (missing weather coverage, overlapping events, ...).
class ConfigError : public FlexgridError {
 public:
  using FlexgridError::FlexgridError;
};

/// Numerical fault inside the thermal simulation (non-finite temperature etc.).
class SimError : public FlexgridError {
 public:
  using FlexgridError::FlexgridError;
};

/// API misuse: a precondition stated on the call was violated.
class ContractViolation : public FlexgridError {
 public:
  using FlexgridError::FlexgridError;
};

class TrainingError : public FlexgridError {
 public:
  using FlexgridError::FlexgridError;
};

class RankingError : public FlexgridError {
 public:
  using FlexgridError::FlexgridError;
};

class DispatchError : public FlexgridError {
 public:
  using FlexgridError::FlexgridError;
};

}  // namespace flexgrid
