#pragma once

#include <functional>
#include <span>
#include <string>

#include "dcl/tape.hpp"

namespace dcl {

// Compares reverse-mode gradients against central finite differences for a
// scalar function of a set of parameters. The function is re-evaluated with
// perturbed parameter entries, so it must be deterministic.
struct GradCheckResult {
  real max_rel_error = 0;
  real max_abs_error = 0;
  std::string worst_entry;  // "param[i]" of the largest relative error
  bool passed = true;
};

GradCheckResult check_gradients(
    const std::function<Var(Tape&, std::span<Parameter>)>& build_loss,
    std::span<Parameter> params, real fd_step = 1e-5, real rel_tol = 1e-4,
    real abs_floor = 1e-7);

}  // namespace dcl
