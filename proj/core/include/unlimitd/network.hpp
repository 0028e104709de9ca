#pragma once

#include <functional>
#include <vector>

#include "unlimitd/linalg.hpp"
#include "unlimitd/rng.hpp"

namespace unlimitd {

enum class Activation { ReLU, Identity };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully-connected architecture: widths (N_x, hidden..., N_y) and the hidden
/// activation. The output layer is always affine.
class NetworkSpec {
 public:
  NetworkSpec(std::vector<int> layer_widths, Activation activation);

  /// 1-40-40-1 ReLU regressor used throughout the experiments.
  static NetworkSpec default_regressor();

  const std::vector<int>& layer_widths() const { return widths_; }
  Activation activation() const { return activation_; }

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  int fan_in(int layer) const { return widths_[layer]; }
  int fan_out(int layer) const { return widths_[layer + 1]; }

  /// P = sum over layers of (in * out + out).
  Eigen::Index param_count() const { return param_count_; }
  /// Offset of layer l's weight block (column-major out x in), then its bias.
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(int layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(fan_in(layer)) * fan_out(layer);
  }

  bool operator==(const NetworkSpec& other) const {
    return widths_ == other.widths_ && activation_ == other.activation_;
  }

 private:
  std::vector<int> widths_;
  Activation activation_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index param_count_ = 0;
};

/// Flattened parameters theta in R^P tied to their architecture.
class ParamVector {
 public:
  ParamVector(NetworkSpec spec, Vector values);

  static ParamVector zeros(const NetworkSpec& spec);
  /// He initialization: W ~ N(0, 2 / fan_in), b = 0.
  static ParamVector he_init(const NetworkSpec& spec, Rng& rng);

  const NetworkSpec& spec() const { return spec_; }
  const Vector& values() const { return values_; }
  Vector& mutable_values() { return values_; }
  Eigen::Index size() const { return values_.size(); }

  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<const Vector> bias(int layer) const;

 private:
  NetworkSpec spec_;
  Vector values_;
};

/// g(theta, X): X is N_x x K (inputs as columns), result is N_y x K.
Matrix forward(const ParamVector& theta, const Matrix& inputs);

/// J(theta, X) of shape (N_y K) x P. Row t * N_y + o is the gradient of output
/// o at input column t.
Matrix jacobian(const ParamVector& theta, const Matrix& inputs);

/// g(theta0, X) + J(theta0, X)(theta - theta0), reshaped to N_y x K.
Matrix linearized_predict(const ParamVector& theta0, const ParamVector& theta, const Matrix& inputs);

/// Gradient of sum_t cotangent(:, t) . g(theta, x_t) with respect to theta,
/// i.e. J^T vec(cotangent). cotangent is N_y x K.
Vector output_pullback(const ParamVector& theta, const Matrix& inputs, const Matrix& cotangent);

/// Gradient with respect to theta of <G, J(theta, X)>_F for a fixed G of the
/// Jacobian's shape: a sum of Hessian-vector products, one per Jacobian row,
/// computed by forward-mode differentiation of the backward pass.
Vector jacobian_pullback(const ParamVector& theta, const Matrix& inputs, const Matrix& jac_cotangent);

/// Scalar function of a Jacobian. Returns the value and, when `grad` is not
/// null, writes dvalue/dJ (same shape as J) into it.
using JacobianScalarFn = std::function<double(const Matrix& jac, Matrix* grad)>;

/// d/dtheta0 of fn(J(theta0, X)).
Vector grad_through_jacobian(const ParamVector& theta0, const JacobianScalarFn& fn, const Matrix& inputs);

}  // namespace unlimitd
