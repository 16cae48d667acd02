#include "dcl/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace dcl {

GradCheckResult check_gradients(
    const std::function<Var(Tape&, std::span<Parameter>)>& build_loss,
    std::span<Parameter> params, real fd_step, real rel_tol, real abs_floor) {
  // Analytic gradients.
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var loss = build_loss(tape, params);
    tape.backward(loss);
    for (const Parameter& p : params) analytic.push_back(tape.grad_of(p));
  }

  auto eval = [&]() {
    Tape tape;
    Var loss = build_loss(tape, params);
    return tape.value(loss)[0];
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const real saved = p.value[i];
      p.value[i] = saved + fd_step;
      const real up = eval();
      p.value[i] = saved - fd_step;
      const real down = eval();
      p.value[i] = saved;

      const real numeric = (up - down) / (2 * fd_step);
      const real exact = analytic[pi][i];
      const real abs_err = std::abs(numeric - exact);
      const real denom = std::max(std::max(std::abs(numeric), std::abs(exact)),
                                  abs_floor);
      const real rel_err = abs_err / denom;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (rel_err > result.max_rel_error) {
        result.max_rel_error = rel_err;
        result.worst_entry = p.name + "[" + std::to_string(i) + "]";
      }
      // Entries where both gradients are ~0 pass through the abs floor.
      if (rel_err > rel_tol && abs_err > abs_floor) result.passed = false;
    }
  }
  return result;
}

}  // namespace dcl
