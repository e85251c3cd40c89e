#pragma once

#include <stdexcept>
#include <string>

namespace pm4d {

// Base class for all library failures. Subclasses distinguish input
// problems (bad files, shape mismatches) from numeric ones (degenerate
// scales, no RANSAC consensus) so callers can map them to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- input / format errors ---
struct ParseError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct MissingInput : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct FrameMismatch : Error {
  using Error::Error;
};

// --- numeric errors ---
struct NearZeroDepth : Error {
  using Error::Error;
};
struct EmptyValidSet : Error {
  using Error::Error;
};
struct DegenerateScale : Error {
  using Error::Error;
};
struct NonFiniteLoss : Error {
  using Error::Error;
};
struct DegenerateFit : Error {
  using Error::Error;
};
struct InsufficientCorrespondences : Error {
  using Error::Error;
};
struct NoConsensus : Error {
  using Error::Error;
};
struct EmptyScene : Error {
  using Error::Error;
};

}  // namespace pm4d
