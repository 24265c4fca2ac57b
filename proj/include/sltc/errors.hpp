#pragma once

#include <stdexcept>
#include <string>

namespace sltc {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnreachableDestination : Error {
  using Error::Error;
};
struct MissingGroupParams : Error {
  using Error::Error;
};
struct NonPositiveLogArgument : Error {
  using Error::Error;
};
struct NoCandidateSupplier : Error {
  using Error::Error;
};
struct ShipmentExceedsCapacity : Error {
  using Error::Error;
};
struct MissingRoute : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct InfeasibleAdjustment : Error {
  using Error::Error;
};
struct ZeroInitialFrequency : Error {
  using Error::Error;
};
struct InsufficientObservations : Error {
  using Error::Error;
};
struct EmptyOriginRow : Error {
  using Error::Error;
};
struct NonConvergence : Error {
  using Error::Error;
};
struct EmptyInput : Error {
  using Error::Error;
};
struct MissingInput : Error {
  using Error::Error;
};
struct SchemaViolation : Error {
  using Error::Error;
};
struct InvalidConfig : Error {
  using Error::Error;
};
struct InvariantViolation : Error {
  using Error::Error;
};

}  // namespace sltc
