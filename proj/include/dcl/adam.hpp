#pragma once

#include <vector>

#include "dcl/tape.hpp"

namespace dcl {

struct AdamConfig {
  real lr = 1e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

// Bias-corrected Adam state for one parameter tensor.
struct AdamState {
  Tensor m;
  Tensor v;
  long step_count = 0;
  AdamConfig cfg;

  explicit AdamState(const Tensor& param_value, AdamConfig cfg = {});
  void step(Tensor& param, const Tensor& grad);
};

// A set of parameters sharing one learning-rate configuration.
class AdamGroup {
 public:
  AdamGroup() = default;
  AdamGroup(std::vector<Parameter*> params, AdamConfig cfg);

  // Reads each parameter's gradient off the tape and applies one update.
  void step(const Tape& tape);
  const std::vector<Parameter*>& params() const { return params_; }
  bool empty() const { return params_.empty(); }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamState> states_;
};

}  // namespace dcl
