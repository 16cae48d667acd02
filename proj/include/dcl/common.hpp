#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcl {

#ifdef DCL_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

// Thrown when a training loss leaves the finite range; carries the step index
// so callers can report where the run broke.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace dcl
