#pragma once

#include <stdexcept>
#include <string>

namespace himor {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateBlend : Error {
  using Error::Error;
};
struct DegenerateGeometry : Error {
  using Error::Error;
};
struct ShapeMismatch : Error {
  using Error::Error;
};
struct InvalidDepth : Error {
  using Error::Error;
};
struct InvalidBinding : Error {
  using Error::Error;
};
struct ClusterCountExceedsPoints : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct VersionError : Error {
  using Error::Error;
};
struct SpecError : Error {
  using Error::Error;
};
struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(int step)
      : Error("non-finite loss at step " + std::to_string(step)), step(step) {}
  int step;
};
struct ZeroNorm : Error {
  using Error::Error;
};

}  // namespace himor
