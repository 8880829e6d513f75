#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <vector>

#include "lvbnn/bnn.hpp"
#include "lvbnn/envs.hpp"
#include "lvbnn/rng.hpp"

namespace lvbnn::decompose {

struct Config {
  int weight_draws = 50;        // M
  int samples_per_entropy = 500;  // L
  int neighbor_k = 3;
  std::uint64_t seed = 0;
  void validate() const;
};

/// A predictive distribution whose conditioning variable (the network
/// weights, for a BNN) can be resampled. Total entropy resamples the
/// condition for every draw; aleatoric entropy holds it fixed across a
/// sample set.
class ConditionalSampler {
 public:
  virtual ~ConditionalSampler() = default;
  virtual int output_dim() const = 0;
  virtual void resample_condition(Rng& rng) = 0;
  virtual Eigen::VectorXd sample(Rng& rng) = 0;
};

/// BNN predictive distribution at a fixed input x, conditioned on one
/// weight draw; z ~ N(0, gamma) and eps ~ N(0, Sigma) per sample.
class BnnPredictive : public ConditionalSampler {
 public:
  BnnPredictive(const bnn::Posterior& posterior, const Eigen::VectorXd& x);
  int output_dim() const override;
  void resample_condition(Rng& rng) override;
  Eigen::VectorXd sample(Rng& rng) override;

 private:
  const bnn::Posterior& posterior_;
  Eigen::VectorXd net_input_;
  mlp::Params weights_;
};

/// Entropy of the marginal predictive distribution: L draws, each with
/// a fresh condition, run through the nearest-neighbor estimator.
double total_entropy(ConditionalSampler& sampler, const Config& config);

/// Average over M condition draws of the entropy of L samples with the
/// condition fixed.
double aleatoric_entropy(ConditionalSampler& sampler, const Config& config);

struct AcquisitionScore {
  Eigen::VectorXd x;
  double total_entropy = 0.0;
  double aleatoric_entropy = 0.0;
  double epistemic_score = 0.0;  // total - aleatoric, exactly
};

/// Both entropies on seeds derived from config.seed; the score is their
/// difference and may be negative from estimator noise.
AcquisitionScore epistemic_score(ConditionalSampler& sampler,
                                 const Eigen::VectorXd& x,
                                 const Config& config);

double total_entropy(const bnn::Posterior& posterior, const Eigen::VectorXd& x,
                     const Config& config);
double aleatoric_entropy(const bnn::Posterior& posterior,
                         const Eigen::VectorXd& x, const Config& config);
AcquisitionScore epistemic_score(const bnn::Posterior& posterior,
                                 const Eigen::VectorXd& x,
                                 const Config& config);

/// Indices of the batch_size largest scores; exact ties break toward
/// the lowest index.
std::vector<int> select_top_indices(const std::vector<double>& scores,
                                    int batch_size);

/// Indices of the batch_size largest epistemic scores over the
/// candidate rows; ties break toward the lowest index. Each candidate
/// is scored on a seed derived from (config.seed, candidate index).
std::vector<int> acquire(const bnn::Posterior& posterior,
                         const Eigen::MatrixXd& candidates, int batch_size,
                         const Config& config);

/// Law of total variance on grouped samples (one group per condition
/// draw): total = unbiased variance of all values pooled, aleatoric =
/// mean per-group unbiased variance, epistemic = their difference.
struct VarianceDecomposition {
  double total_variance = 0.0;
  double expected_aleatoric_variance = 0.0;
  double epistemic_variance = 0.0;
};
VarianceDecomposition variance_decomposition(
    const std::vector<std::vector<double>>& groups);

/// Network and prior hyperparameters for models trained inside the
/// active-learning loop (and by the CLI).
struct ModelConfig {
  std::vector<int> hidden{20, 20};
  double lambda = 1.0;
  double gamma = 1.0;
  double sigma = 0.01;
};

mlp::Arch make_arch(int feature_dim, int output_dim,
                    const std::vector<int>& hidden);

enum class AlStrategy { epistemic, random };

struct AlRecord {
  int round = 0;
  int dataset_size = 0;
  double test_log_likelihood = 0.0;  // mean over the held-out set
  double mean_epistemic_score = 0.0;  // over the fixed evaluation grid
};

/// Active-learning loop: retrain from scratch each round, score a fixed
/// evaluation grid, acquire per_round points from a candidate pool
/// drawn from the env's input distribution, query labels, append.
std::vector<AlRecord> al_loop(const envs::StochasticFunctionEnv& env,
                              int init_n, int rounds, int per_round,
                              AlStrategy strategy, const Config& config,
                              const bnn::TrainConfig& train_config,
                              const ModelConfig& model_config);

}  // namespace lvbnn::decompose
