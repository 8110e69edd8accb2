#pragma once

#include <stdexcept>
#include <string>

namespace ropnet {

enum class ErrorKind {
  Shape,       // tensor/layer dimension mismatch
  Parameter,   // invalid argument or flag value
  Format,      // malformed file (PPM, manifest, model container)
  Numeric,     // non-finite value where a finite one is required
  Capability,  // operation not supported (dynamic shapes, unknown op, missing backend)
  Data,        // dataset-level problem (empty split, inconsistent group labels)
  Io,          // filesystem failure
  Validation,  // domain-invariant violation (non-binary label, prob out of range)
  Split        // train/test split cannot be satisfied
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace ropnet
