#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lvbnn/bnn.hpp"
#include "lvbnn/envs.hpp"
#include "lvbnn/mlp.hpp"
#include "lvbnn/rng.hpp"

namespace lvbnn::policy {

/// Deterministic policy network; raw outputs are squashed into the
/// action bounds via tanh scaling.
struct PolicyNet {
  mlp::Arch arch;  // state_dim -> hidden -> action_dim (pre-squash)
  mlp::Params params;
  Eigen::VectorXd action_low, action_high;

  Eigen::VectorXd act(const Eigen::VectorXd& state) const;
  void validate() const;
};

PolicyNet init_policy(int state_dim, const std::vector<int>& hidden,
                      const Eigen::VectorXd& action_low,
                      const Eigen::VectorXd& action_high, std::uint64_t seed);

enum class RiskMode { none, stddev, bias };

struct RolloutConfig {
  int horizon = 100;      // T
  int weight_draws = 50;  // M
  int noise_draws = 25;   // N
  double beta = 0.0;
  RiskMode risk_mode = RiskMode::none;
  int starts_per_step = 1;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Differentiable state cost used both for rollout scoring and for
/// backpropagation through time.
struct CostModel {
  std::function<double(const Eigen::VectorXd& s)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& s)> gradient;
};

CostModel cost_model_from_mdp(const envs::GroundTruthMdp& mdp);

/// M x N cost trajectories over horizon T from a single start state.
/// States and latent draws are retained so the same batch supports
/// reparameterized gradients.
struct RolloutBatch {
  int weight_draws = 0, noise_draws = 0, horizon = 0, state_dim = 0;
  std::vector<double> costs;    // (m, n, t), t = 1..T stored at t-1
  std::vector<double> states;   // (m, n, t, d), t = 0..T
  std::vector<double> latents;  // (m, n, t), z_t used to produce s_t
  std::vector<mlp::Params> weight_samples;  // one per m

  double cost(int m, int n, int t) const {  // t in 1..T
    return costs[(static_cast<std::size_t>(m) * noise_draws + n) * horizon +
                 (t - 1)];
  }
  Eigen::Map<const Eigen::VectorXd> state(int m, int n, int t) const {
    const std::size_t off =
        ((static_cast<std::size_t>(m) * noise_draws + n) * (horizon + 1) + t) *
        state_dim;
    return {states.data() + off, state_dim};
  }
  double latent(int m, int n, int t) const {  // t in 1..T
    return latents[(static_cast<std::size_t>(m) * noise_draws + n) * horizon +
                   (t - 1)];
  }
};

/// Samples W_m ~ q(W) for m = 1..M and runs N trajectories per draw
/// with fresh z_t ~ N(0, gamma) and eps_t ~ N(0, Sigma) each step.
/// Bit-reproducible: each (m, n) stream derives from (seed, m, n).
RolloutBatch rollout_batch(const bnn::Posterior& posterior,
                           const PolicyNet& policy, const Eigen::VectorXd& s0,
                           const RolloutConfig& config, const CostModel& cost,
                           std::uint64_t seed);

/// (1/(MN)) sum_{m,n,t} c_{m,n}(t).
double expected_cost_objective(const RolloutBatch& batch);

/// Mean episode cost plus beta times the unbiased standard deviation of
/// the M*N episode costs.
double stddev_risk_objective(const RolloutBatch& batch, double beta);

/// Per-timestep mean cost plus beta times the unbiased standard
/// deviation over the M per-weight mean costs, summed over t.
double bias_risk_objective(const RolloutBatch& batch, double beta);

struct PolicyGradient {
  double objective = 0.0;
  mlp::Params grad;  // d objective / d policy weights
};

/// Pathwise gradient of the configured objective: noise draws fixed,
/// backpropagation through time through dynamics-network input
/// gradients. Accumulation order is fixed (m, then n ascending).
PolicyGradient policy_gradient(const bnn::Posterior& posterior,
                               const PolicyNet& policy,
                               const Eigen::VectorXd& s0,
                               const RolloutConfig& config,
                               const CostModel& cost, std::uint64_t seed);

struct PolicyTrainResult {
  PolicyNet policy;
  std::vector<double> objective_trace;
};

/// Adam on the configured objective; each step draws start states
/// uniformly from the pool (minibatch of config.starts_per_step).
PolicyTrainResult train_policy(const bnn::Posterior& posterior,
                               const PolicyNet& initial,
                               const Eigen::MatrixXd& start_pool,
                               const RolloutConfig& config,
                               const CostModel& cost, int train_steps,
                               double step_size, std::uint64_t seed);

struct ModelBiasReport {
  Eigen::VectorXd per_timestep_gap;  // |E_true[c_t] - E_model[c_t]|, length T
  double bias = 0.0;                 // sum of per_timestep_gap
  double expected_true_cost = 0.0;   // sum_t E_true[c_t]
  double expected_model_cost = 0.0;  // sum_t E_model[c_t]
};

/// E_true[c_t] from reps_true ground-truth rollouts per start state,
/// E_model[c_t] from M x N model rollouts; gaps averaged over the pool.
ModelBiasReport evaluate_model_bias(const PolicyNet& policy,
                                    const bnn::Posterior& posterior,
                                    const envs::GroundTruthMdp& mdp,
                                    const Eigen::MatrixXd& start_pool,
                                    int reps_true, const RolloutConfig& config,
                                    std::uint64_t seed);

struct FrontierRecord {
  double beta = 0.0;
  std::uint64_t seed = 0;
  double expected_model_cost = 0.0;
  double expected_true_cost = 0.0;
  double model_bias = 0.0;
};

struct FrontierParams {
  int train_steps = 2000;
  double step_size = 1e-3;
  int reps_true = 200;
  int eval_starts = 20;
  std::vector<int> policy_hidden{20, 20};
};

/// Trains one policy per (beta, seed) pair and evaluates it against the
/// ground truth; beta = 0 is the risk-ignoring baseline.
std::vector<FrontierRecord> frontier(const bnn::Posterior& posterior,
                                     const envs::GroundTruthMdp& mdp,
                                     const std::vector<double>& betas,
                                     RiskMode risk_mode,
                                     const std::vector<std::uint64_t>& seeds,
                                     const RolloutConfig& base_config,
                                     const Eigen::MatrixXd& start_pool,
                                     const FrontierParams& params);

std::string to_json_string(const PolicyNet& policy);
PolicyNet policy_from_json_string(const std::string& text);
void save_policy(const PolicyNet& policy, const std::string& path);
PolicyNet load_policy(const std::string& path);

}  // namespace lvbnn::policy
