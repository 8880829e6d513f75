#include "lvbnn/mlp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lvbnn::mlp {

void Arch::validate() const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument(
        "mlp::Arch: need at least one layer (>= 2 layer sizes), got " +
        std::to_string(layer_sizes.size()));
  }
  for (int s : layer_sizes) {
    if (s < 1) {
      throw std::invalid_argument("mlp::Arch: all layer sizes must be >= 1");
    }
  }
}

Params Params::zeros(const Arch& arch) {
  Params p;
  for (int l = 1; l < static_cast<int>(arch.layer_sizes.size()); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(arch.layer_sizes[l],
                                              arch.layer_sizes[l - 1] + 1));
  }
  return p;
}

void Params::validate(const Arch& arch) const {
  if (static_cast<int>(weights.size()) != arch.num_layers()) {
    throw std::invalid_argument("mlp::Params: layer count mismatch");
  }
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto& w = weights[l];
    if (w.rows() != arch.layer_sizes[l + 1] ||
        w.cols() != arch.layer_sizes[l] + 1) {
      std::ostringstream oss;
      oss << "mlp::Params: layer " << l << " has shape " << w.rows() << "x"
          << w.cols() << ", expected " << arch.layer_sizes[l + 1] << "x"
          << arch.layer_sizes[l] + 1;
      throw std::invalid_argument(oss.str());
    }
    if (!w.allFinite()) {
      throw std::invalid_argument("mlp::Params: non-finite entry in layer " +
                                  std::to_string(l));
    }
  }
}

namespace {

void check_input(const Arch& arch, const Eigen::VectorXd& input) {
  if (input.size() != arch.input_dim()) {
    std::ostringstream oss;
    oss << "mlp: input length " << input.size() << " does not match arch input dim "
        << arch.input_dim();
    throw std::invalid_argument(oss.str());
  }
}

// Forward pass keeping pre-activations; activations[l] is the output of
// layer l (activations[0] is the input).
struct Trace {
  std::vector<Eigen::VectorXd> activations;
  std::vector<Eigen::VectorXd> preacts;
};

Trace run_forward_for_trace(const Params& params,
                            const Eigen::VectorXd& input) {
  const int num_layers = static_cast<int>(params.weights.size());
  Trace trace;
  trace.activations.reserve(num_layers + 1);
  trace.preacts.reserve(num_layers);
  trace.activations.push_back(input);
  Eigen::VectorXd a = input;
  for (int l = 0; l < num_layers; ++l) {
    const auto& w = params.weights[l];
    Eigen::VectorXd pre =
        w.leftCols(w.cols() - 1) * a + w.col(w.cols() - 1);
    trace.preacts.push_back(pre);
    a = (l + 1 < num_layers) ? pre.cwiseMax(0.0).eval() : pre;
    trace.activations.push_back(a);
  }
  return trace;
}

}  // namespace

Eigen::VectorXd forward(const Arch& arch, const Params& params,
                        const Eigen::VectorXd& input) {
  arch.validate();
  params.validate(arch);
  check_input(arch, input);
  return forward_unchecked(params, input);
}

Eigen::VectorXd forward_unchecked(const Params& params,
                                  const Eigen::VectorXd& input) {
  const int num_layers = static_cast<int>(params.weights.size());
  Eigen::VectorXd a = input;
  for (int l = 0; l < num_layers; ++l) {
    const auto& w = params.weights[l];
    Eigen::VectorXd pre = w.leftCols(w.cols() - 1) * a + w.col(w.cols() - 1);
    a = (l + 1 < num_layers) ? pre.cwiseMax(0.0).eval() : std::move(pre);
  }
  return a;
}

Gradients backward(const Arch& arch, const Params& params,
                   const Eigen::VectorXd& input,
                   const Eigen::VectorXd& output_cotangent) {
  arch.validate();
  params.validate(arch);
  check_input(arch, input);
  if (output_cotangent.size() != arch.output_dim()) {
    throw std::invalid_argument("mlp::backward: cotangent length mismatch");
  }
  return backward_unchecked(params, input, output_cotangent);
}

Gradients backward_unchecked(const Params& params,
                             const Eigen::VectorXd& input,
                             const Eigen::VectorXd& output_cotangent) {
  const int num_layers = static_cast<int>(params.weights.size());
  Trace trace = run_forward_for_trace(params, input);
  for (int l = 0; l < num_layers; ++l) {
    if (!trace.preacts[l].allFinite()) {
      throw std::runtime_error("mlp::backward: non-finite value in layer " +
                               std::to_string(l));
    }
  }

  Gradients grads;
  grads.params.weights.reserve(num_layers);
  for (const auto& w : params.weights) {
    grads.params.weights.emplace_back(w.rows(), w.cols());
  }
  Eigen::VectorXd delta = output_cotangent;  // d objective / d pre-activation
  for (int l = num_layers - 1; l >= 0; --l) {
    const auto& w = params.weights[l];
    const Eigen::VectorXd& below = trace.activations[l];
    grads.params.weights[l].leftCols(w.cols() - 1) = delta * below.transpose();
    grads.params.weights[l].col(w.cols() - 1) = delta;
    Eigen::VectorXd back = w.leftCols(w.cols() - 1).transpose() * delta;
    if (l > 0) {
      // Rectifier mask; subgradient at exactly 0 is 0.
      back = (trace.preacts[l - 1].array() > 0.0).select(back, 0.0);
    }
    delta = back;
  }
  grads.input = delta;
  return grads;
}

Eigen::MatrixXd forward_batch_unchecked(const Params& params,
                                        const Eigen::MatrixXd& inputs) {
  const int num_layers = static_cast<int>(params.weights.size());
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < num_layers; ++l) {
    const auto& w = params.weights[l];
    Eigen::MatrixXd pre =
        (w.leftCols(w.cols() - 1) * a).colwise() + w.col(w.cols() - 1);
    a = (l + 1 < num_layers) ? pre.cwiseMax(0.0).eval() : std::move(pre);
  }
  return a;
}

BatchGradients backward_batch_unchecked(
    const Params& params, const Eigen::MatrixXd& inputs,
    const Eigen::MatrixXd& output_cotangents) {
  const int num_layers = static_cast<int>(params.weights.size());
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> preacts;
  activations.reserve(num_layers + 1);
  preacts.reserve(num_layers);
  activations.push_back(inputs);
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < num_layers; ++l) {
    const auto& w = params.weights[l];
    Eigen::MatrixXd pre =
        (w.leftCols(w.cols() - 1) * a).colwise() + w.col(w.cols() - 1);
    if (!pre.allFinite()) {
      throw std::runtime_error("mlp::backward: non-finite value in layer " +
                               std::to_string(l));
    }
    preacts.push_back(pre);
    a = (l + 1 < num_layers) ? pre.cwiseMax(0.0).eval() : std::move(pre);
    activations.push_back(a);
  }

  BatchGradients grads;
  grads.params.weights.reserve(num_layers);
  for (const auto& w : params.weights) {
    grads.params.weights.emplace_back(w.rows(), w.cols());
  }
  Eigen::MatrixXd delta = output_cotangents;
  for (int l = num_layers - 1; l >= 0; --l) {
    const auto& w = params.weights[l];
    const Eigen::MatrixXd& below = activations[l];
    grads.params.weights[l].leftCols(w.cols() - 1) = delta * below.transpose();
    grads.params.weights[l].col(w.cols() - 1) = delta.rowwise().sum();
    Eigen::MatrixXd back = w.leftCols(w.cols() - 1).transpose() * delta;
    if (l > 0) {
      // Rectifier mask; subgradient at exactly 0 is 0.
      back = (preacts[l - 1].array() > 0.0).select(back, 0.0);
    }
    delta = std::move(back);
  }
  grads.inputs = std::move(delta);
  return grads;
}

}  // namespace lvbnn::mlp
