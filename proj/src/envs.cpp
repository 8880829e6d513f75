#include "lvbnn/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace lvbnn::envs {

StochasticFunctionEnv heteroskedastic_env() {
  StochasticFunctionEnv env;
  env.name = "heteroskedastic";
  env.grid_lo = -6.0;
  env.grid_hi = 6.0;
  env.sample_input = [](Rng& rng) {
    static const double means[3] = {-4.0, 0.0, 4.0};
    static const double sds[3] = {0.4, 0.9, 0.4};
    std::uniform_int_distribution<int> pick(0, 2);
    const int c = pick(rng);
    return means[c] + sds[c] * draw_normal(rng);
  };
  env.sample_output = [](double x, Rng& rng) {
    return 7.0 * std::sin(x) + 3.0 * std::abs(std::cos(x / 2.0)) * draw_normal(rng);
  };
  env.conditional_entropy = [](double x) {
    const double v = 9.0 * std::cos(x / 2.0) * std::cos(x / 2.0);
    return 0.5 * std::log(2.0 * M_PI * M_E * v);
  };
  return env;
}

StochasticFunctionEnv bimodal_env() {
  StochasticFunctionEnv env;
  env.name = "bimodal";
  env.grid_lo = -0.5;
  env.grid_hi = 2.0;
  env.sample_input = [](Rng& rng) {
    // Exponential(rate 0.5) truncated to [-0.5, 2] by rejection.
    std::exponential_distribution<double> expo(0.5);
    for (;;) {
      const double x = expo(rng);
      if (x >= -0.5 && x <= 2.0) return x;
    }
  };
  env.sample_output = [](double x, Rng& rng) {
    const bool sin_branch = draw_uniform(rng, 0.0, 1.0) < 0.5;
    const double mean = sin_branch ? 10.0 * std::sin(x) : 10.0 * std::cos(x);
    return mean + draw_normal(rng);
  };
  return env;
}

bnn::Dataset make_dataset(const StochasticFunctionEnv& env, int n,
                          std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_dataset: need n >= 1");
  bnn::Dataset data;
  data.inputs.resize(n, 1);
  data.targets.resize(n, 1);
  Rng rng(derive_seed(seed, 0xDA7A));
  for (int i = 0; i < n; ++i) {
    const double x = env.sample_input(rng);
    data.inputs(i, 0) = x;
    data.targets(i, 0) = env.sample_output(x, rng);
  }
  return data;
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double passage_noise_sd(double s) {
  return 0.05 + 0.45 * logistic((s - 6.0) / 0.3);
}

}  // namespace

GroundTruthMdp narrow_passage_mdp() {
  GroundTruthMdp mdp;
  mdp.state_dim = 1;
  mdp.action_dim = 1;
  mdp.action_low = Eigen::VectorXd::Constant(1, -1.0);
  mdp.action_high = Eigen::VectorXd::Constant(1, 1.0);
  mdp.horizon = 100;
  mdp.step = [](const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) {
    const double next =
        s[0] + a[0] + passage_noise_sd(s[0]) * draw_normal(rng);
    return Eigen::VectorXd::Constant(1, std::clamp(next, 0.0, 10.0)).eval();
  };
  mdp.cost = [](const Eigen::VectorXd& s) {
    const double d = s[0] - 9.0;
    return 1.0 - std::exp(-d * d / 2.0);
  };
  mdp.cost_gradient = [](const Eigen::VectorXd& s) {
    const double d = s[0] - 9.0;
    return Eigen::VectorXd::Constant(1, d * std::exp(-d * d / 2.0)).eval();
  };
  mdp.sample_initial_state = [](Rng& rng) {
    return Eigen::VectorXd::Constant(1, draw_uniform(rng, 0.0, 2.0)).eval();
  };
  return mdp;
}

TransitionBatch collect_batch(const GroundTruthMdp& mdp, int episodes,
                              std::uint64_t seed) {
  if (episodes < 1) {
    throw std::invalid_argument("collect_batch: need episodes >= 1");
  }
  const int total = episodes * mdp.horizon;
  TransitionBatch batch;
  batch.states.resize(total, mdp.state_dim);
  batch.actions.resize(total, mdp.action_dim);
  batch.next_states.resize(total, mdp.state_dim);
  int row = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng(derive_seed(seed, 0xEB, static_cast<std::uint64_t>(ep)));
    Eigen::VectorXd s = mdp.sample_initial_state(rng);
    for (int t = 0; t < mdp.horizon; ++t) {
      Eigen::VectorXd a(mdp.action_dim);
      if (s[0] < 5.0) {
        a[0] = draw_uniform(rng, -1.0, 1.0);
      } else {
        a[0] = std::clamp(-0.3 + 0.2 * draw_normal(rng), mdp.action_low[0],
                          mdp.action_high[0]);
      }
      const Eigen::VectorXd sp = mdp.step(s, a, rng);
      batch.states.row(row) = s.transpose();
      batch.actions.row(row) = a.transpose();
      batch.next_states.row(row) = sp.transpose();
      ++row;
      s = sp;
    }
  }
  return batch;
}

}  // namespace lvbnn::envs
