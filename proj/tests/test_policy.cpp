#include "lvbnn/policy.hpp"

#include <cmath>

#include "doctest.h"
#include "lvbnn/rng.hpp"

using namespace lvbnn;

namespace {

// Collapsed single-layer dynamics: s' = cs*s + ca*a + cz*z + bias + eps.
bnn::Posterior linear_dynamics(double cs, double ca, double cz, double bias,
                               double sigma = 1e-20, double gamma = 1.0) {
  bnn::Posterior p;
  p.arch = mlp::Arch{{3, 1}};
  bnn::FactorMatrix fm;
  fm.mean.resize(1, 4);
  fm.mean << cs, ca, cz, bias;
  fm.log_variance = Eigen::MatrixXd::Constant(1, 4, std::log(1e-20));
  p.weight_factors.push_back(fm);
  p.latent_mean = Eigen::VectorXd::Zero(1);
  p.latent_log_variance = Eigen::VectorXd::Zero(1);
  p.prior_latent_variance = gamma;
  p.noise_variance = Eigen::VectorXd::Constant(1, sigma);
  return p;
}

policy::PolicyNet zero_policy() {
  policy::PolicyNet net;
  net.arch = mlp::Arch{{1, 1}};
  net.params = mlp::Params::zeros(net.arch);
  net.action_low = Eigen::VectorXd::Constant(1, -1.0);
  net.action_high = Eigen::VectorXd::Constant(1, 1.0);
  return net;
}

std::vector<double> flat_params(const mlp::Params& p) {
  std::vector<double> out;
  for (const auto& w : p.weights) {
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) out.push_back(w(i, j));
  }
  return out;
}

double objective_of(const policy::RolloutBatch& batch,
                    const policy::RolloutConfig& cfg) {
  switch (cfg.risk_mode) {
    case policy::RiskMode::none:
      return policy::expected_cost_objective(batch);
    case policy::RiskMode::stddev:
      return policy::stddev_risk_objective(batch, cfg.beta);
    case policy::RiskMode::bias:
      return policy::bias_risk_objective(batch, cfg.beta);
  }
  return 0.0;
}

}  // namespace

TEST_CASE("act: squash keeps actions inside the bounds") {
  Eigen::VectorXd low(1), high(1);
  low << -2.0;
  high << 6.0;
  auto net = policy::init_policy(1, {8}, low, high, 3);
  // Blow the weights up so the raw outputs saturate.
  for (auto& w : net.params.weights) w *= 50.0;
  Rng rng(4);
  Eigen::VectorXd s(1);
  for (int i = 0; i < 200; ++i) {
    s << 10.0 * draw_normal(rng);
    const double a = net.act(s)[0];
    CHECK(a >= -2.0);
    CHECK(a <= 6.0);
  }
  // Zero raw output lands on the interval center.
  auto centered = zero_policy();
  centered.action_low << -2.0;
  centered.action_high << 6.0;
  s << 0.7;
  CHECK(centered.act(s)[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("init_policy: deterministic, shaped, validated") {
  Eigen::VectorXd low = Eigen::VectorXd::Constant(1, -1.0);
  Eigen::VectorXd high = Eigen::VectorXd::Constant(1, 1.0);
  const auto a = policy::init_policy(1, {5, 4}, low, high, 9);
  const auto b = policy::init_policy(1, {5, 4}, low, high, 9);
  CHECK(a.arch.layer_sizes == std::vector<int>{1, 5, 4, 1});
  CHECK(flat_params(a.params) == flat_params(b.params));
  CHECK_THROWS_AS(policy::init_policy(1, {5}, high, low, 9),
                  std::invalid_argument);
}

TEST_CASE("RolloutConfig: risk objectives require M >= 2") {
  policy::RolloutConfig cfg;
  cfg.weight_draws = 1;
  cfg.risk_mode = policy::RiskMode::none;
  CHECK_NOTHROW(cfg.validate());
  cfg.risk_mode = policy::RiskMode::stddev;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.weight_draws = 2;
  CHECK_NOTHROW(cfg.validate());
  cfg.horizon = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("rollout_batch follows the deterministic recursion exactly") {
  // s' = 0.5 s + 0.2 with the action and latent decoupled.
  const auto p = linear_dynamics(0.5, 0.0, 0.0, 0.2);
  const auto net = zero_policy();
  const auto mdp = envs::narrow_passage_mdp();
  policy::CostModel cost{[](const Eigen::VectorXd& s) { return s[0]; },
                         [](const Eigen::VectorXd& s) {
                           return Eigen::VectorXd::Ones(1).eval();
                         }};
  policy::RolloutConfig cfg;
  cfg.horizon = 6;
  cfg.weight_draws = 2;
  cfg.noise_draws = 3;
  Eigen::VectorXd s0(1);
  s0 << 1.0;
  const auto batch = policy::rollout_batch(p, net, s0, cfg, cost, 5);
  double s = 1.0;
  for (int t = 1; t <= 6; ++t) {
    s = 0.5 * s + 0.2;
    for (int m = 0; m < 2; ++m) {
      for (int n = 0; n < 3; ++n) {
        CHECK(batch.state(m, n, t)[0] == doctest::Approx(s).epsilon(1e-9));
        CHECK(batch.cost(m, n, t) == doctest::Approx(s).epsilon(1e-9));
      }
    }
  }
  CHECK(batch.state(0, 0, 0)[0] == 1.0);
}

TEST_CASE("rollout_batch: stored states, latents and weights are consistent") {
  const auto p = linear_dynamics(0.9, 0.5, 0.3, 0.1);
  Eigen::VectorXd low = Eigen::VectorXd::Constant(1, -1.0);
  Eigen::VectorXd high = Eigen::VectorXd::Constant(1, 1.0);
  const auto net = policy::init_policy(1, {4}, low, high, 7);
  const auto mdp = envs::narrow_passage_mdp();
  const auto cost = policy::cost_model_from_mdp(mdp);
  policy::RolloutConfig cfg;
  cfg.horizon = 5;
  cfg.weight_draws = 2;
  cfg.noise_draws = 2;
  Eigen::VectorXd s0(1);
  s0 << 2.0;
  const auto batch = policy::rollout_batch(p, net, s0, cfg, cost, 8);
  for (int m = 0; m < 2; ++m) {
    for (int n = 0; n < 2; ++n) {
      for (int t = 1; t <= 5; ++t) {
        Eigen::VectorXd in(3);
        in << batch.state(m, n, t - 1)[0],
            net.act(batch.state(m, n, t - 1))[0], batch.latent(m, n, t);
        const double predicted =
            mlp::forward(p.arch, batch.weight_samples[m], in)[0];
        // Sigma is ~0, so the stored state is the network output.
        CHECK(batch.state(m, n, t)[0] ==
              doctest::Approx(predicted).epsilon(1e-8));
        CHECK(batch.cost(m, n, t) ==
              doctest::Approx(mdp.cost(batch.state(m, n, t))).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("rollout_batch: reproducible and schedule independent") {
  const auto p = linear_dynamics(0.9, 0.5, 0.3, 0.1);
  const auto net = zero_policy();
  const auto cost = policy::cost_model_from_mdp(envs::narrow_passage_mdp());
  Eigen::VectorXd s0(1);
  s0 << 1.5;
  policy::RolloutConfig small;
  small.horizon = 4;
  small.weight_draws = 2;
  small.noise_draws = 2;
  policy::RolloutConfig big = small;
  big.weight_draws = 3;
  big.noise_draws = 4;
  const auto a = policy::rollout_batch(p, net, s0, small, cost, 11);
  const auto b = policy::rollout_batch(p, net, s0, small, cost, 11);
  const auto c = policy::rollout_batch(p, net, s0, big, cost, 11);
  CHECK(a.costs == b.costs);
  // The (m, n) streams do not depend on M or N.
  for (int m = 0; m < 2; ++m) {
    for (int n = 0; n < 2; ++n) {
      for (int t = 1; t <= 4; ++t) {
        CHECK(a.cost(m, n, t) == c.cost(m, n, t));
      }
    }
  }
}

TEST_CASE("rollout_batch rejects mismatched shapes") {
  const auto p = linear_dynamics(1.0, 1.0, 0.0, 0.0);
  const auto net = zero_policy();
  const auto cost = policy::cost_model_from_mdp(envs::narrow_passage_mdp());
  policy::RolloutConfig cfg;
  cfg.horizon = 2;
  Eigen::VectorXd s0(2);  // dynamics expects state_dim 1
  s0 << 0.0, 0.0;
  CHECK_THROWS_AS(policy::rollout_batch(p, net, s0, cfg, cost, 1),
                  std::invalid_argument);
  Eigen::VectorXd bad(1);
  bad << std::nan("");
  CHECK_THROWS_AS(policy::rollout_batch(p, net, bad, cfg, cost, 1),
                  std::invalid_argument);
}

TEST_CASE("objectives: hand case with episode costs {0, 2}") {
  policy::RolloutBatch batch;
  batch.weight_draws = 2;
  batch.noise_draws = 1;
  batch.horizon = 1;
  batch.state_dim = 1;
  batch.costs = {0.0, 2.0};
  CHECK(policy::expected_cost_objective(batch) == 1.0);
  // Unbiased sd of {0, 2} is sqrt(2).
  CHECK(policy::stddev_risk_objective(batch, 1.0) ==
        doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-14));
  CHECK(policy::bias_risk_objective(batch, 1.0) ==
        doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-14));
  CHECK(policy::stddev_risk_objective(batch, 0.0) == 1.0);
  CHECK(policy::bias_risk_objective(batch, 0.0) == 1.0);
}

TEST_CASE("objectives: manual recomputation on a stochastic batch") {
  const auto p = linear_dynamics(0.9, 0.4, 0.3, 0.05, 0.01);
  const auto net = zero_policy();
  const auto cost = policy::cost_model_from_mdp(envs::narrow_passage_mdp());
  Eigen::VectorXd s0(1);
  s0 << 3.0;
  policy::RolloutConfig cfg;
  cfg.horizon = 7;
  cfg.weight_draws = 4;
  cfg.noise_draws = 3;
  const auto batch = policy::rollout_batch(p, net, s0, cfg, cost, 13);
  const int M = 4, N = 3, T = 7;

  double all = 0.0;
  std::vector<double> episodes;
  for (int m = 0; m < M; ++m) {
    for (int n = 0; n < N; ++n) {
      double ep = 0.0;
      for (int t = 1; t <= T; ++t) ep += batch.cost(m, n, t);
      episodes.push_back(ep);
      all += ep;
    }
  }
  const double mean = all / (M * N);
  CHECK(policy::expected_cost_objective(batch) ==
        doctest::Approx(mean).epsilon(1e-13));

  double ss = 0.0;
  for (double e : episodes) ss += (e - mean) * (e - mean);
  const double sd = std::sqrt(ss / (M * N - 1.0));
  CHECK(policy::stddev_risk_objective(batch, 2.5) ==
        doctest::Approx(mean + 2.5 * sd).epsilon(1e-13));
  CHECK(policy::stddev_risk_objective(batch, 2.5) >=
        policy::expected_cost_objective(batch));

  double bias_obj = 0.0;
  for (int t = 1; t <= T; ++t) {
    std::vector<double> mu(M, 0.0);
    double mu_bar = 0.0;
    for (int m = 0; m < M; ++m) {
      for (int n = 0; n < N; ++n) mu[m] += batch.cost(m, n, t);
      mu[m] /= N;
      mu_bar += mu[m];
    }
    mu_bar /= M;
    double mss = 0.0;
    for (double v : mu) mss += (v - mu_bar) * (v - mu_bar);
    bias_obj += mu_bar + 2.5 * std::sqrt(mss / (M - 1.0));
  }
  CHECK(policy::bias_risk_objective(batch, 2.5) ==
        doctest::Approx(bias_obj).epsilon(1e-13));
}

TEST_CASE("policy_gradient matches finite differences in every risk mode") {
  mlp::Arch dyn_arch{{3, 4, 1}};
  Eigen::VectorXd sigma = Eigen::VectorXd::Constant(1, 0.01);
  const auto p = bnn::init_posterior(dyn_arch, 1, 1.0, 1.0, sigma, 17);
  Eigen::VectorXd low = Eigen::VectorXd::Constant(1, -1.0);
  Eigen::VectorXd high = Eigen::VectorXd::Constant(1, 1.0);
  const auto cost = policy::cost_model_from_mdp(envs::narrow_passage_mdp());
  Eigen::VectorXd s0(1);
  s0 << 2.0;
  const double step = 1e-5;

  for (auto mode : {policy::RiskMode::none, policy::RiskMode::stddev,
                    policy::RiskMode::bias}) {
    policy::RolloutConfig cfg;
    cfg.horizon = 5;
    cfg.weight_draws = 3;
    cfg.noise_draws = 2;
    cfg.risk_mode = mode;
    cfg.beta = mode == policy::RiskMode::none ? 0.0 : 1.5;
    const std::uint64_t seed = 19 + static_cast<int>(mode);
    const auto net = policy::init_policy(1, {4}, low, high, seed);

    const auto pg = policy::policy_gradient(p, net, s0, cfg, cost, 23);
    // The reported objective agrees with a plain rollout on the same seed.
    const auto check_batch = policy::rollout_batch(p, net, s0, cfg, cost, 23);
    CHECK(pg.objective ==
          doctest::Approx(objective_of(check_batch, cfg)).epsilon(1e-13));

    const std::vector<double> analytic = flat_params(pg.grad);
    std::vector<double> flat = flat_params(net.params);
    for (std::size_t d = 0; d < flat.size(); ++d) {
      auto probe = [&](double delta) {
        policy::PolicyNet q = net;
        std::vector<double> shifted = flat;
        shifted[d] += delta;
        std::size_t pos = 0;
        for (auto& w : q.params.weights) {
          for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j) w(i, j) = shifted[pos++];
        }
        const auto b = policy::rollout_batch(p, q, s0, cfg, cost, 23);
        return objective_of(b, cfg);
      };
      const double fd = (probe(step) - probe(-step)) / (2 * step);
      CHECK(std::abs(analytic[d] - fd) <=
            1e-3 * std::max({std::abs(analytic[d]), std::abs(fd), 1e-4}));
    }
  }
}

TEST_CASE("train_policy: zero steps is the identity, training improves") {
  // s' = s + a, cost (s - 3)^2 scaled: push toward +1 actions.
  const auto p = linear_dynamics(1.0, 1.0, 0.0, 0.0);
  policy::CostModel cost{
      [](const Eigen::VectorXd& s) {
        return (s[0] - 3.0) * (s[0] - 3.0) / 9.0;
      },
      [](const Eigen::VectorXd& s) {
        return Eigen::VectorXd::Constant(1, 2.0 * (s[0] - 3.0) / 9.0).eval();
      }};
  Eigen::VectorXd low = Eigen::VectorXd::Constant(1, -1.0);
  Eigen::VectorXd high = Eigen::VectorXd::Constant(1, 1.0);
  const auto initial = policy::init_policy(1, {6}, low, high, 29);
  Eigen::MatrixXd starts(1, 1);
  starts << 0.0;
  policy::RolloutConfig cfg;
  cfg.horizon = 3;
  cfg.weight_draws = 1;
  cfg.noise_draws = 1;

  const auto frozen =
      policy::train_policy(p, initial, starts, cfg, cost, 0, 0.05, 31);
  CHECK(flat_params(frozen.policy.params) == flat_params(initial.params));
  CHECK(frozen.objective_trace.empty());

  const auto trained =
      policy::train_policy(p, initial, starts, cfg, cost, 400, 0.05, 31);
  REQUIRE(trained.objective_trace.size() == 400);
  CHECK(trained.objective_trace.back() < trained.objective_trace.front());
  // Optimal play saturates the positive action bound along the way.
  Eigen::VectorXd s(1);
  for (double v : {0.0, 1.0, 2.0}) {
    s << v;
    CHECK(trained.policy.act(s)[0] > 0.9);
  }
  // Reruns reproduce exactly.
  const auto again =
      policy::train_policy(p, initial, starts, cfg, cost, 400, 0.05, 31);
  CHECK(flat_params(again.policy.params) ==
        flat_params(trained.policy.params));
}

TEST_CASE("evaluate_model_bias: exact model has near-zero bias") {
  // Ground truth s' = s + a + 0.1 z matches the collapsed dynamics net.
  envs::GroundTruthMdp mdp;
  mdp.state_dim = 1;
  mdp.action_dim = 1;
  mdp.action_low = Eigen::VectorXd::Constant(1, -1.0);
  mdp.action_high = Eigen::VectorXd::Constant(1, 1.0);
  mdp.horizon = 10;
  mdp.step = [](const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) {
    return Eigen::VectorXd::Constant(1, s[0] + a[0] + 0.1 * draw_normal(rng))
        .eval();
  };
  mdp.cost = [](const Eigen::VectorXd& s) { return s[0] * s[0] / 100.0; };
  mdp.cost_gradient = [](const Eigen::VectorXd& s) {
    return Eigen::VectorXd::Constant(1, s[0] / 50.0).eval();
  };
  mdp.sample_initial_state = [](Rng& rng) {
    return Eigen::VectorXd::Constant(1, draw_uniform(rng, 0.0, 2.0)).eval();
  };
  const auto p = linear_dynamics(1.0, 1.0, 0.1, 0.0);
  const auto net = zero_policy();
  Eigen::MatrixXd starts(2, 1);
  starts << 0.5, 1.5;
  policy::RolloutConfig cfg;
  cfg.horizon = 10;
  cfg.weight_draws = 10;
  cfg.noise_draws = 400;
  const auto report =
      policy::evaluate_model_bias(net, p, mdp, starts, 4000, cfg, 37);
  REQUIRE(report.per_timestep_gap.size() == 10);
  CHECK(report.bias ==
        doctest::Approx(report.per_timestep_gap.sum()).epsilon(1e-12));
  CHECK(report.bias < 0.02);
  CHECK(std::abs(report.expected_true_cost - report.expected_model_cost) <
        0.02);
  // The summed gap always dominates the net cost mismatch.
  CHECK(report.bias >= std::abs(report.expected_true_cost -
                                report.expected_model_cost) -
                           1e-12);
}

TEST_CASE("frontier: record bookkeeping on a tiny run") {
  const auto mdp = envs::narrow_passage_mdp();
  mlp::Arch dyn_arch{{3, 4, 1}};
  Eigen::VectorXd sigma = Eigen::VectorXd::Constant(1, 0.01);
  const auto p = bnn::init_posterior(dyn_arch, 1, 1.0, 1.0, sigma, 41);
  Eigen::MatrixXd starts(3, 1);
  starts << 0.5, 1.0, 1.5;
  policy::RolloutConfig base;
  base.horizon = 5;
  base.weight_draws = 3;
  base.noise_draws = 2;
  policy::FrontierParams params;
  params.train_steps = 15;
  params.step_size = 1e-3;
  params.reps_true = 20;
  params.eval_starts = 2;
  params.policy_hidden = {4};
  const auto records =
      policy::frontier(p, mdp, {0.0, 1.0}, policy::RiskMode::bias, {3}, base,
                       starts, params);
  REQUIRE(records.size() == 2);
  CHECK(records[0].beta == 0.0);
  CHECK(records[1].beta == 1.0);
  CHECK(records[0].seed == 3);
  for (const auto& r : records) {
    CHECK(std::isfinite(r.expected_model_cost));
    CHECK(std::isfinite(r.expected_true_cost));
    CHECK(std::isfinite(r.model_bias));
    CHECK(r.model_bias >= 0.0);
  }
  CHECK_THROWS_AS(policy::frontier(p, mdp, {}, policy::RiskMode::bias, {3},
                                   base, starts, params),
                  std::invalid_argument);
  CHECK_THROWS_AS(policy::frontier(p, mdp, {0.0}, policy::RiskMode::bias, {},
                                   base, starts, params),
                  std::invalid_argument);
}

TEST_CASE("policy JSON round-trip is bit-stable") {
  Eigen::VectorXd low = Eigen::VectorXd::Constant(1, -1.0);
  Eigen::VectorXd high = Eigen::VectorXd::Constant(1, 1.0);
  const auto net = policy::init_policy(1, {7, 3}, low, high, 43);
  const std::string text = policy::to_json_string(net);
  const auto back = policy::policy_from_json_string(text);
  CHECK(flat_params(back.params) == flat_params(net.params));
  CHECK(back.arch.layer_sizes == net.arch.layer_sizes);
  CHECK(back.action_low == net.action_low);
  CHECK(back.action_high == net.action_high);
  CHECK(policy::to_json_string(back) == text);

  std::string tampered = text;
  const auto pos = tampered.find("\"format_version\": 1");
  REQUIRE(pos != std::string::npos);
  tampered.replace(pos, 19, "\"format_version\": 7");
  CHECK_THROWS_AS(policy::policy_from_json_string(tampered),
                  std::invalid_argument);
}
