#pragma once

#include <stdexcept>
#include <string>

namespace mvl {

// Base of every error the library throws. kind() is a stable machine-readable
// tag used by the CLI's structured error output.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// Precondition violated: out-of-range pixel, bad pose, shape mismatch, ...
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain_error"; }
};

// Layout edges do not partition the panorama into the declared elements.
class LayoutTopologyError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "layout_topology_error"; }
};

// All confidence weights over an element region are zero.
class ConfidenceDegenerateError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "confidence_degenerate"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DomainError(what);
}

}  // namespace detail
}  // namespace mvl
