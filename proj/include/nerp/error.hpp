#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nerp {

// Base class for every error raised by the library. Callers that only care
// about "did it work" catch this; the subclasses name the failure category.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Incompatible dimensions, layer shapes or operator geometry.
class ShapeError : public Error {
public:
  using Error::Error;
};

// Values outside their documented domain (coordinates, counts, ranges).
class InputError : public Error {
public:
  using Error::Error;
};

// Geometry the operators do not support (non-square CT images, ...).
class GeometryError : public Error {
public:
  using Error::Error;
};

// Non-finite gradients or losses during training.
class OptimizerError : public Error {
public:
  OptimizerError(const std::string& what, long iteration = -1)
      : Error(iteration >= 0 ? what + " (iteration " + std::to_string(iteration) + ")" : what),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

private:
  long iteration_;
};

// Tape used with parameters it was not recorded against.
class ContractError : public Error {
public:
  using Error::Error;
};

// Invalid experiment or reconstruction configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed file contents. `offset` is the byte position where parsing failed.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

}  // namespace nerp
