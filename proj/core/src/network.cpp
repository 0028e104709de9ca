#include "unlimitd/network.hpp"

#include <cmath>
#include <string>

#include "unlimitd/errors.hpp"

namespace unlimitd {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::ReLU:
      return "relu";
    case Activation::Identity:
      return "identity";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "identity") return Activation::Identity;
  throw ContractViolation("unsupported activation '" + name + "' (expected relu or identity)");
}

NetworkSpec::NetworkSpec(std::vector<int> layer_widths, Activation activation)
    : widths_(std::move(layer_widths)), activation_(activation) {
  if (widths_.size() < 2) throw ContractViolation("NetworkSpec: need at least input and output widths");
  for (int w : widths_) {
    if (w < 1) throw ContractViolation("NetworkSpec: layer widths must be >= 1");
  }
  if (activation_ == Activation::ReLU && widths_.size() < 3) {
    throw ContractViolation("NetworkSpec: a ReLU network needs at least one hidden layer");
  }
  offsets_.reserve(widths_.size() - 1);
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(param_count_);
    param_count_ += static_cast<Eigen::Index>(fan_in(l)) * fan_out(l) + fan_out(l);
  }
}

NetworkSpec NetworkSpec::default_regressor() { return NetworkSpec({1, 40, 40, 1}, Activation::ReLU); }

ParamVector::ParamVector(NetworkSpec spec, Vector values) : spec_(std::move(spec)), values_(std::move(values)) {
  if (values_.size() != spec_.param_count()) {
    throw ContractViolation("ParamVector: expected " + std::to_string(spec_.param_count()) +
                            " values, got " + std::to_string(values_.size()));
  }
}

ParamVector ParamVector::zeros(const NetworkSpec& spec) { return {spec, Vector::Zero(spec.param_count())}; }

ParamVector ParamVector::he_init(const NetworkSpec& spec, Rng& rng) {
  Vector v = Vector::Zero(spec.param_count());
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double stddev = std::sqrt(2.0 / spec.fan_in(l));
    const Eigen::Index n = static_cast<Eigen::Index>(spec.fan_in(l)) * spec.fan_out(l);
    v.segment(spec.weight_offset(l), n) = rng.normal_vector(n, stddev);
  }
  return {spec, std::move(v)};
}

Eigen::Map<const Matrix> ParamVector::weight(int layer) const {
  return {values_.data() + spec_.weight_offset(layer), spec_.fan_out(layer), spec_.fan_in(layer)};
}

Eigen::Map<const Vector> ParamVector::bias(int layer) const {
  return {values_.data() + spec_.bias_offset(layer), spec_.fan_out(layer)};
}

namespace {

/// Layer inputs a_l (a_0 = X) and hidden-unit masks from one batched pass.
struct ForwardTrace {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l; inputs.back() is the output
  std::vector<Matrix> masks;   // masks[l] = act'(z_l) for hidden layers l < L - 1
};

void check_inputs(const ParamVector& theta, const Matrix& inputs) {
  if (inputs.rows() != theta.spec().input_dim()) {
    throw ContractViolation("network: input has " + std::to_string(inputs.rows()) + " rows, spec expects " +
                            std::to_string(theta.spec().input_dim()));
  }
  if (inputs.cols() < 1) throw ContractViolation("network: batch must contain at least one input");
}

ForwardTrace run_forward(const ParamVector& theta, const Matrix& inputs) {
  check_inputs(theta, inputs);
  const NetworkSpec& spec = theta.spec();
  const int num_layers = spec.num_layers();
  ForwardTrace trace;
  trace.inputs.reserve(num_layers + 1);
  trace.masks.reserve(num_layers);
  trace.inputs.push_back(inputs);
  for (int l = 0; l < num_layers; ++l) {
    Matrix z = theta.weight(l) * trace.inputs.back();
    z.colwise() += theta.bias(l);
    if (l + 1 < num_layers && spec.activation() == Activation::ReLU) {
      // relu'(0) := 0
      Matrix mask = (z.array() > 0.0).cast<double>().matrix();
      z.array() *= mask.array();
      trace.masks.push_back(std::move(mask));
    } else if (l + 1 < num_layers) {
      trace.masks.push_back(Matrix::Ones(z.rows(), z.cols()));
    }
    trace.inputs.push_back(std::move(z));
  }
  return trace;
}

/// Backpropagates a cotangent on the output through every layer.
/// Returns deltas[l] = d(cotangent . out)/dz_l for each input column.
std::vector<Matrix> run_backward(const ParamVector& theta, const ForwardTrace& trace, Matrix cotangent) {
  const int num_layers = theta.spec().num_layers();
  std::vector<Matrix> deltas(num_layers);
  deltas[num_layers - 1] = std::move(cotangent);
  for (int l = num_layers - 1; l > 0; --l) {
    deltas[l - 1] = (theta.weight(l).transpose() * deltas[l]).cwiseProduct(trace.masks[l - 1]);
  }
  return deltas;
}

}  // namespace

Matrix forward(const ParamVector& theta, const Matrix& inputs) { return run_forward(theta, inputs).inputs.back(); }

Matrix jacobian(const ParamVector& theta, const Matrix& inputs) {
  const NetworkSpec& spec = theta.spec();
  const ForwardTrace trace = run_forward(theta, inputs);
  const Eigen::Index batch = inputs.cols();
  const int ny = spec.output_dim();
  Matrix jac(ny * batch, spec.param_count());

  for (int o = 0; o < ny; ++o) {
    Matrix seed = Matrix::Zero(ny, batch);
    seed.row(o).setOnes();
    const std::vector<Matrix> deltas = run_backward(theta, trace, std::move(seed));
    for (int l = 0; l < spec.num_layers(); ++l) {
      const Matrix& a = trace.inputs[l];
      const Matrix& d = deltas[l];
      const int out = spec.fan_out(l);
      const Eigen::Index w_off = spec.weight_offset(l);
      for (int j = 0; j < spec.fan_in(l); ++j) {
        for (int i = 0; i < out; ++i) {
          Eigen::Map<Vector, 0, Eigen::InnerStride<>> column(jac.col(w_off + j * out + i).data() + o, batch,
                                                            Eigen::InnerStride<>(ny));
          column = d.row(i).cwiseProduct(a.row(j)).transpose();
        }
      }
      const Eigen::Index b_off = spec.bias_offset(l);
      for (int i = 0; i < out; ++i) {
        Eigen::Map<Vector, 0, Eigen::InnerStride<>> column(jac.col(b_off + i).data() + o, batch,
                                                          Eigen::InnerStride<>(ny));
        column = d.row(i).transpose();
      }
    }
  }
  return jac;
}

Matrix linearized_predict(const ParamVector& theta0, const ParamVector& theta, const Matrix& inputs) {
  if (!(theta0.spec() == theta.spec())) throw ContractViolation("linearized_predict: parameter specs differ");
  const Matrix base = forward(theta0, inputs);
  const Vector delta = jacobian(theta0, inputs) * (theta.values() - theta0.values());
  return base + Eigen::Map<const Matrix>(delta.data(), base.rows(), base.cols());
}

Vector output_pullback(const ParamVector& theta, const Matrix& inputs, const Matrix& cotangent) {
  const NetworkSpec& spec = theta.spec();
  const ForwardTrace trace = run_forward(theta, inputs);
  if (cotangent.rows() != spec.output_dim() || cotangent.cols() != inputs.cols()) {
    throw ContractViolation("output_pullback: cotangent must be N_y x K");
  }
  const std::vector<Matrix> deltas = run_backward(theta, trace, cotangent);
  Vector grad(spec.param_count());
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::Map<Matrix>(grad.data() + spec.weight_offset(l), spec.fan_out(l), spec.fan_in(l)) =
        deltas[l] * trace.inputs[l].transpose();
    grad.segment(spec.bias_offset(l), spec.fan_out(l)) = deltas[l].rowwise().sum();
  }
  return grad;
}

Vector jacobian_pullback(const ParamVector& theta, const Matrix& inputs, const Matrix& jac_cotangent) {
  const NetworkSpec& spec = theta.spec();
  const ForwardTrace trace = run_forward(theta, inputs);
  const Eigen::Index batch = inputs.cols();
  const int ny = spec.output_dim();
  const int num_layers = spec.num_layers();
  if (jac_cotangent.rows() != ny * batch || jac_cotangent.cols() != spec.param_count()) {
    throw ContractViolation("jacobian_pullback: cotangent must have the Jacobian's shape");
  }

  Vector result = Vector::Zero(spec.param_count());
  Vector direction(spec.param_count());
  std::vector<Vector> d_inputs(num_layers);  // tangent of each layer's input
  std::vector<Vector> d_deltas(num_layers);

  for (int o = 0; o < ny; ++o) {
    Matrix seed = Matrix::Zero(ny, batch);
    seed.row(o).setOnes();
    const std::vector<Matrix> deltas = run_backward(theta, trace, std::move(seed));

    for (Eigen::Index t = 0; t < batch; ++t) {
      const Eigen::Index row = t * ny + o;
      direction = jac_cotangent.row(row).transpose();
      if (direction.isZero(0.0)) continue;
      auto dw = [&](int l) {
        return Eigen::Map<const Matrix>(direction.data() + spec.weight_offset(l), spec.fan_out(l), spec.fan_in(l));
      };
      auto db = [&](int l) { return Eigen::Map<const Vector>(direction.data() + spec.bias_offset(l), spec.fan_out(l)); };

      // Tangent of the forward pass along `direction`.
      d_inputs[0] = Vector::Zero(spec.input_dim());
      for (int l = 0; l + 1 < num_layers; ++l) {
        Vector dz = dw(l) * trace.inputs[l].col(t) + db(l);
        if (l > 0) dz.noalias() += theta.weight(l) * d_inputs[l];
        d_inputs[l + 1] = dz.cwiseProduct(trace.masks[l].col(t));
      }

      // Tangent of the backward pass; the output delta is constant.
      d_deltas[num_layers - 1] = Vector::Zero(ny);
      for (int l = num_layers - 1; l > 0; --l) {
        Vector pre = dw(l).transpose() * deltas[l].col(t);
        pre.noalias() += theta.weight(l).transpose() * d_deltas[l];
        d_deltas[l - 1] = pre.cwiseProduct(trace.masks[l - 1].col(t));
      }

      for (int l = 0; l < num_layers; ++l) {
        Eigen::Map<Matrix> gw(result.data() + spec.weight_offset(l), spec.fan_out(l), spec.fan_in(l));
        gw.noalias() += d_deltas[l] * trace.inputs[l].col(t).transpose();
        if (l > 0) gw.noalias() += deltas[l].col(t) * d_inputs[l].transpose();
        result.segment(spec.bias_offset(l), spec.fan_out(l)) += d_deltas[l];
      }
    }
  }
  return result;
}

Vector grad_through_jacobian(const ParamVector& theta0, const JacobianScalarFn& fn, const Matrix& inputs) {
  const Matrix jac = jacobian(theta0, inputs);
  Matrix grad_jac = Matrix::Zero(jac.rows(), jac.cols());
  fn(jac, &grad_jac);
  if (grad_jac.rows() != jac.rows() || grad_jac.cols() != jac.cols()) {
    throw ContractViolation("grad_through_jacobian: scalar function returned a gradient of the wrong shape");
  }
  return jacobian_pullback(theta0, inputs, grad_jac);
}

}  // namespace unlimitd
