#pragma once

#include <Eigen/Core>
#include <vector>

namespace lvbnn::mlp {

/// Feedforward architecture: rectifier hidden layers, identity output.
/// layer_sizes = {input dim, hidden sizes..., output dim}.
struct Arch {
  std::vector<int> layer_sizes;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  /// Throws std::invalid_argument unless there is at least one hidden
  /// layer and every size is >= 1.
  void validate() const;
};

/// One network realization. weights[l] has shape V_l x (V_{l-1}+1);
/// the last column holds the layer bias.
struct Params {
  std::vector<Eigen::MatrixXd> weights;

  static Params zeros(const Arch& arch);
  void validate(const Arch& arch) const;
};

/// Evaluates the network. Deterministic; identical inputs give
/// bit-identical outputs.
Eigen::VectorXd forward(const Arch& arch, const Params& params,
                        const Eigen::VectorXd& input);

struct Gradients {
  Params params;           // d(cotangent . output) / d weights
  Eigen::VectorXd input;   // d(cotangent . output) / d input
};

/// Exact reverse-mode derivatives of cotangent . forward(input) with
/// respect to every weight and every input coordinate. The rectifier
/// subgradient at 0 is 0.
Gradients backward(const Arch& arch, const Params& params,
                   const Eigen::VectorXd& input,
                   const Eigen::VectorXd& output_cotangent);

/// Hot-path variants that skip shape validation; callers must have
/// verified (arch, params, input) once up front. Semantics match
/// forward/backward, including the non-finite layer check in backward.
Eigen::VectorXd forward_unchecked(const Params& params,
                                  const Eigen::VectorXd& input);
Gradients backward_unchecked(const Params& params,
                             const Eigen::VectorXd& input,
                             const Eigen::VectorXd& output_cotangent);

/// Batched hot-path evaluation: one case per column. Column c of the
/// result equals forward_unchecked(params, inputs.col(c)) up to
/// floating-point association.
Eigen::MatrixXd forward_batch_unchecked(const Params& params,
                                        const Eigen::MatrixXd& inputs);

struct BatchGradients {
  Params params;           // weight derivatives, summed over columns
  Eigen::MatrixXd inputs;  // per-column input derivatives
};

/// Batched reverse mode: derivatives of sum_c cotangent_c . f(input_c).
/// Weight gradients are accumulated across columns; input gradients are
/// kept per column.
BatchGradients backward_batch_unchecked(const Params& params,
                                        const Eigen::MatrixXd& inputs,
                                        const Eigen::MatrixXd& output_cotangents);

}  // namespace lvbnn::mlp
