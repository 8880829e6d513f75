#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "lvbnn/mlp.hpp"
#include "lvbnn/rng.hpp"

namespace lvbnn::bnn {

/// One Gaussian belief, variance kept as exp(log_variance) so it stays
/// positive under unconstrained optimization.
struct GaussianFactor {
  double mean = 0.0;
  double log_variance = 0.0;
  double variance() const { return std::exp(log_variance); }
};

/// Gaussian factors for one weight matrix (same shape as the matrix).
struct FactorMatrix {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd log_variance;
};

/// Factorized Gaussian posterior over all network weights plus one
/// scalar latent variable per training datapoint. The network input
/// slot is D features + 1 latent (the last input coordinate).
struct Posterior {
  mlp::Arch arch;
  std::vector<FactorMatrix> weight_factors;
  Eigen::VectorXd latent_mean;          // length N
  Eigen::VectorXd latent_log_variance;  // length N
  double prior_weight_variance = 1.0;   // lambda
  double prior_latent_variance = 1.0;   // gamma
  Eigen::VectorXd noise_variance;       // Sigma, one entry per output dim

  int num_data() const { return static_cast<int>(latent_mean.size()); }
  int feature_dim() const { return arch.input_dim() - 1; }
  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd inputs;   // N x D
  Eigen::MatrixXd targets;  // N x K
  int size() const { return static_cast<int>(inputs.rows()); }
  void validate() const;
};

struct TrainConfig {
  double alpha = 1.0;       // divergence parameter, in [0, 1]
  int mc_samples = 20;      // K joint (W, z) samples per energy evaluation
  double step_size = 1e-2;
  int steps = 5000;
  int minibatch_size = 32;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Weight means ~ N(0, 1/fan_in), weight log-variances log(1e-3),
/// latent means 0, latent variances gamma.
Posterior init_posterior(const mlp::Arch& arch, int n_data, double lambda,
                         double gamma, const Eigen::VectorXd& sigma,
                         std::uint64_t seed);

/// Reparameterized draw: weight = mean + sqrt(variance) * n01.
mlp::Params sample_weights(const Posterior& posterior, Rng& rng);

/// Diagonal Gaussian log density sum_k N(y_k | mean_k, sigma_k).
double gaussian_log_density(const Eigen::VectorXd& y,
                            const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& sigma);

/// KL( N(m, v) || N(0, prior_variance) ).
double kl_gaussian(const GaussianFactor& q, double prior_variance);

/// Gradients with the same layout as the posterior's variational
/// parameters. Latent gradients cover the full training set; entries
/// outside the evaluated batch are zero.
struct PosteriorGrads {
  std::vector<FactorMatrix> weights;
  Eigen::VectorXd latent_mean;
  Eigen::VectorXd latent_log_variance;
};

struct EnergyResult {
  double energy = 0.0;
  PosteriorGrads grads;
};

/// Black-box alpha-divergence energy over a minibatch (global dataset
/// indices), with reparameterized Monte-Carlo gradients for every
/// variational parameter. alpha = 0 is the standard ELBO.
///
/// Sampling order (fixed, part of the reproducibility contract):
/// first the K weight draws, layer by layer, row-major within a layer;
/// then for each batch element in order, its K latent draws.
EnergyResult alpha_energy(const Posterior& posterior, const Dataset& data,
                          const std::vector<int>& batch,
                          const TrainConfig& config, Rng& rng);

struct TrainResult {
  Posterior posterior;
  std::vector<double> energy_trace;
};

/// Adam over shuffled minibatches of alpha_energy. Deterministic given
/// (posterior, dataset, config).
TrainResult train(const Posterior& posterior, const Dataset& data,
                  const TrainConfig& config);

/// M x S x K tensor of predictive samples.
struct SampleTensor {
  int weight_draws = 0, per_weight = 0, output_dim = 0;
  std::vector<double> data;
  double& at(int m, int s, int k) {
    return data[(static_cast<std::size_t>(m) * per_weight + s) * output_dim + k];
  }
  double at(int m, int s, int k) const {
    return data[(static_cast<std::size_t>(m) * per_weight + s) * output_dim + k];
  }
};

/// sample(m, s) = forward(x ++ z; W_m) + eps, with W_m ~ q(W) held
/// fixed across the S inner draws, z ~ N(0, gamma), eps ~ N(0, Sigma).
SampleTensor predict_samples(const Posterior& posterior,
                             const Eigen::VectorXd& x, int weight_draws,
                             int per_weight, Rng& rng);

/// Monte-Carlo predictive log-likelihood log p(y | x) using S joint
/// (W, z) draws; each draw contributes a Gaussian with variance Sigma.
double predictive_log_likelihood(const Posterior& posterior,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y, int num_draws,
                                 Rng& rng);

/// Versioned JSON serialization; round-trips bit-stably at the double
/// level.
std::string to_json_string(const Posterior& posterior);
Posterior posterior_from_json_string(const std::string& text);
void save_posterior(const Posterior& posterior, const std::string& path);
Posterior load_posterior(const std::string& path);

}  // namespace lvbnn::bnn
