#pragma once

#include <cstdint>

#include "unlimitd/linalg.hpp"

namespace unlimitd {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for one flat parameter block.
struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step = 0;

  static AdamState zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Vector& params, AdamState& state, const Vector& grad, double lr, const AdamHyper& hyper = {});

}  // namespace unlimitd
