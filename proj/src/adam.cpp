#include "dcl/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dcl {

AdamState::AdamState(const Tensor& param_value, AdamConfig config)
    : m(Tensor::zeros(param_value.shape())),
      v(Tensor::zeros(param_value.shape())),
      cfg(config) {}

void AdamState::step(Tensor& param, const Tensor& grad) {
  if (!param.same_shape(grad) || !param.same_shape(m)) {
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  }
  ++step_count;
  const real b1 = cfg.beta1, b2 = cfg.beta2;
  const real corr1 = real(1) - std::pow(b1, static_cast<real>(step_count));
  const real corr2 = real(1) - std::pow(b2, static_cast<real>(step_count));
  for (std::size_t i = 0; i < param.size(); ++i) {
    real g = grad[i];
    m[i] = b1 * m[i] + (real(1) - b1) * g;
    v[i] = b2 * v[i] + (real(1) - b2) * g * g;
    real mhat = m[i] / corr1;
    real vhat = v[i] / corr2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

AdamGroup::AdamGroup(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (Parameter* p : params_) states_.emplace_back(p->value, cfg);
}

void AdamGroup::step(const Tape& tape) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor g = tape.grad_of(*params_[i]);
    states_[i].step(params_[i]->value, g);
  }
}

}  // namespace dcl
