#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>

#include "lvbnn/bnn.hpp"
#include "lvbnn/rng.hpp"

namespace lvbnn::envs {

/// Ground-truth stochastic regression problem: a distribution over
/// scalar inputs plus a conditional sampler y | x.
struct StochasticFunctionEnv {
  std::string name;
  std::function<double(Rng&)> sample_input;
  std::function<double(double x, Rng&)> sample_output;
  // Closed-form H(y|x) in nats where available; empty otherwise.
  std::function<double(double x)> conditional_entropy;
  double grid_lo = 0.0, grid_hi = 0.0;  // natural x-range for evaluation grids
};

/// y = 7 sin(x) + 3|cos(x/2)| eps, eps ~ N(0,1);
/// x ~ equal-weight Gaussian mixture, means (-4, 0, 4), sds (2/5, 0.9, 2/5).
StochasticFunctionEnv heteroskedastic_env();

/// y = 10 sin(x) + eps or 10 cos(x) + eps with probability 1/2 each;
/// x ~ Exponential(rate 0.5) truncated to [-0.5, 2] by rejection.
StochasticFunctionEnv bimodal_env();

bnn::Dataset make_dataset(const StochasticFunctionEnv& env, int n,
                          std::uint64_t seed);

/// Synthetic stochastic MDP: the low-cost region sits behind a
/// high-noise zone, so cost and cost variance trade off.
struct GroundTruthMdp {
  int state_dim = 1;
  int action_dim = 1;
  Eigen::VectorXd action_low, action_high;
  int horizon = 100;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& s,
                                const Eigen::VectorXd& a, Rng&)> step;
  std::function<double(const Eigen::VectorXd& s)> cost;          // in [0, 1]
  std::function<Eigen::VectorXd(const Eigen::VectorXd& s)> cost_gradient;
  std::function<Eigen::VectorXd(Rng&)> sample_initial_state;
};

/// s' = clamp(s + a + sigma(s) z, 0, 10) with
/// sigma(s) = 0.05 + 0.45 logistic((s - 6)/0.3), z ~ N(0,1);
/// c(s) = 1 - exp(-(s - 9)^2 / 2); s0 ~ U(0, 2); T = 100.
GroundTruthMdp narrow_passage_mdp();

struct TransitionBatch {
  Eigen::MatrixXd states;       // rows: s_t
  Eigen::MatrixXd actions;      // rows: a_t
  Eigen::MatrixXd next_states;  // rows: s_{t+1}
  int size() const { return static_cast<int>(states.rows()); }
};

/// Behavior policy: a ~ U(-1,1) for s < 5, a ~ N(-0.3, 0.2) clamped to
/// the action bounds for s >= 5, so the high-noise zone stays
/// under-observed. T steps per episode.
TransitionBatch collect_batch(const GroundTruthMdp& mdp, int episodes,
                              std::uint64_t seed);

}  // namespace lvbnn::envs
