#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "stacknov/nn.hpp"

namespace stacknov {

struct AdamState {
  long step = 0;
  Vector m, v;   // first/second moment accumulators, lazily sized
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam update with bias correction.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state,
                      double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
  if (state.m.size() == 0) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state shape mismatch");

  ++state.step;
  state.m = state.beta1 * state.m + (1 - state.beta1) * grads;
  state.v = state.beta2 * state.v.array() +
            (1 - state.beta2) * grads.array().square();
  double c1 = 1 - std::pow(state.beta1, static_cast<double>(state.step));
  double c2 = 1 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

// Drives one AdamState per parameter block of a Net.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ParamRef> params, double lr)
      : params_(std::move(params)), states_(params_.size()), lr_(lr) {}

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      adam_step(*params_[i].value, *params_[i].grad, states_[i], lr_);
      params_[i].grad->setZero();
    }
  }

 private:
  std::vector<ParamRef> params_;
  std::vector<AdamState> states_;
  double lr_;
};

}  // namespace stacknov
