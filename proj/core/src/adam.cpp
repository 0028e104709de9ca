#include "unlimitd/adam.hpp"

#include <cmath>

#include "unlimitd/errors.hpp"

namespace unlimitd {

void adam_step(Vector& params, AdamState& state, const Vector& grad, double lr, const AdamHyper& hyper) {
  if (params.size() != grad.size() || state.m.size() != grad.size() || state.v.size() != grad.size()) {
    throw ContractViolation("adam_step: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad;
  state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + hyper.epsilon);
}

}  // namespace unlimitd
