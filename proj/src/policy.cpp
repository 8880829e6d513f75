#include "lvbnn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "lvbnn/adam.hpp"

namespace lvbnn::policy {

void PolicyNet::validate() const {
  arch.validate();
  params.validate(arch);
  if (action_low.size() != arch.output_dim() ||
      action_high.size() != arch.output_dim()) {
    throw std::invalid_argument("PolicyNet: action bound length mismatch");
  }
  if ((action_high.array() <= action_low.array()).any()) {
    throw std::invalid_argument("PolicyNet: need action_high > action_low");
  }
}

namespace {

Eigen::VectorXd squash(const Eigen::VectorXd& raw,
                       const Eigen::VectorXd& low,
                       const Eigen::VectorXd& high) {
  const Eigen::ArrayXd center = 0.5 * (high + low).array();
  const Eigen::ArrayXd half = 0.5 * (high - low).array();
  return (center + half * raw.array().tanh()).matrix();
}

Eigen::VectorXd squash_derivative(const Eigen::VectorXd& raw,
                                  const Eigen::VectorXd& low,
                                  const Eigen::VectorXd& high) {
  const Eigen::ArrayXd half = 0.5 * (high - low).array();
  const Eigen::ArrayXd th = raw.array().tanh();
  return (half * (1.0 - th * th)).matrix();
}

}  // namespace

Eigen::VectorXd PolicyNet::act(const Eigen::VectorXd& state) const {
  return squash(mlp::forward_unchecked(params, state), action_low, action_high);
}

PolicyNet init_policy(int state_dim, const std::vector<int>& hidden,
                      const Eigen::VectorXd& action_low,
                      const Eigen::VectorXd& action_high, std::uint64_t seed) {
  PolicyNet net;
  net.arch.layer_sizes.push_back(state_dim);
  net.arch.layer_sizes.insert(net.arch.layer_sizes.end(), hidden.begin(),
                              hidden.end());
  net.arch.layer_sizes.push_back(static_cast<int>(action_low.size()));
  net.action_low = action_low;
  net.action_high = action_high;
  Rng rng(derive_seed(seed, 0x9019));
  for (int l = 1; l < static_cast<int>(net.arch.layer_sizes.size()); ++l) {
    const int rows = net.arch.layer_sizes[l];
    const int cols = net.arch.layer_sizes[l - 1] + 1;
    Eigen::MatrixXd w(rows, cols);
    const double scale = std::sqrt(1.0 / net.arch.layer_sizes[l - 1]);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = scale * draw_normal(rng);
    }
    net.params.weights.push_back(std::move(w));
  }
  net.validate();
  return net;
}

void RolloutConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("RolloutConfig: T >= 1");
  if (noise_draws < 1) throw std::invalid_argument("RolloutConfig: N >= 1");
  if (weight_draws < 1 || (risk_mode != RiskMode::none && weight_draws < 2)) {
    throw std::invalid_argument(
        "RolloutConfig: M >= 1, and M >= 2 with a risk objective");
  }
  if (starts_per_step < 1) {
    throw std::invalid_argument("RolloutConfig: starts_per_step >= 1");
  }
}

CostModel cost_model_from_mdp(const envs::GroundTruthMdp& mdp) {
  return CostModel{mdp.cost, mdp.cost_gradient};
}

RolloutBatch rollout_batch(const bnn::Posterior& posterior,
                           const PolicyNet& policy, const Eigen::VectorXd& s0,
                           const RolloutConfig& config, const CostModel& cost,
                           std::uint64_t seed) {
  posterior.validate();
  policy.validate();
  config.validate();
  if (!s0.allFinite()) {
    throw std::invalid_argument("rollout_batch: non-finite start state");
  }
  const int state_dim = static_cast<int>(s0.size());
  const int action_dim = static_cast<int>(policy.action_low.size());
  if (posterior.arch.input_dim() != state_dim + action_dim + 1) {
    throw std::invalid_argument(
        "rollout_batch: dynamics input must be state + action + latent");
  }
  if (posterior.arch.output_dim() != state_dim) {
    throw std::invalid_argument(
        "rollout_batch: dynamics output must be the state");
  }

  const int M = config.weight_draws;
  const int N = config.noise_draws;
  const int T = config.horizon;
  RolloutBatch batch;
  batch.weight_draws = M;
  batch.noise_draws = N;
  batch.horizon = T;
  batch.state_dim = state_dim;
  batch.costs.resize(static_cast<std::size_t>(M) * N * T);
  batch.states.resize(static_cast<std::size_t>(M) * N * (T + 1) * state_dim);
  batch.latents.resize(static_cast<std::size_t>(M) * N * T);
  batch.weight_samples.reserve(M);

  const double latent_sd = std::sqrt(posterior.prior_latent_variance);
  Eigen::VectorXd noise_sd = posterior.noise_variance.array().sqrt();
  Eigen::VectorXd dyn_input(state_dim + action_dim + 1);

  for (int m = 0; m < M; ++m) {
    Rng weight_rng(derive_seed(seed, 0xAAA, static_cast<std::uint64_t>(m)));
    batch.weight_samples.push_back(bnn::sample_weights(posterior, weight_rng));
    const mlp::Params& dyn = batch.weight_samples.back();
    for (int n = 0; n < N; ++n) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m) + 1,
                          static_cast<std::uint64_t>(n) + 1));
      Eigen::VectorXd s = s0;
      std::size_t state_off =
          ((static_cast<std::size_t>(m) * N + n) * (T + 1)) * state_dim;
      Eigen::Map<Eigen::VectorXd>(batch.states.data() + state_off, state_dim) =
          s;
      for (int t = 1; t <= T; ++t) {
        const Eigen::VectorXd a = policy.act(s);
        const double z = latent_sd * draw_normal(rng);
        dyn_input.head(state_dim) = s;
        dyn_input.segment(state_dim, action_dim) = a;
        dyn_input[state_dim + action_dim] = z;
        Eigen::VectorXd next = mlp::forward_unchecked(dyn, dyn_input);
        for (int d = 0; d < state_dim; ++d) {
          next[d] += noise_sd[d] * draw_normal(rng);
        }
        if (!next.allFinite()) {
          throw std::runtime_error("rollout_batch: non-finite state at (m=" +
                                   std::to_string(m) + ", n=" +
                                   std::to_string(n) + ", t=" +
                                   std::to_string(t) + ")");
        }
        s = next;
        const std::size_t traj = static_cast<std::size_t>(m) * N + n;
        batch.latents[traj * T + (t - 1)] = z;
        batch.costs[traj * T + (t - 1)] = cost.value(s);
        Eigen::Map<Eigen::VectorXd>(
            batch.states.data() + (traj * (T + 1) + t) * state_dim,
            state_dim) = s;
      }
    }
  }
  return batch;
}

double expected_cost_objective(const RolloutBatch& batch) {
  const double total =
      std::accumulate(batch.costs.begin(), batch.costs.end(), 0.0);
  return total / (static_cast<double>(batch.weight_draws) * batch.noise_draws);
}

namespace {

// Episode costs C_{m,n} = sum_t c_{m,n}(t), flattened m-major.
std::vector<double> episode_costs(const RolloutBatch& batch) {
  const std::size_t rollouts =
      static_cast<std::size_t>(batch.weight_draws) * batch.noise_draws;
  std::vector<double> out(rollouts, 0.0);
  for (std::size_t r = 0; r < rollouts; ++r) {
    for (int t = 0; t < batch.horizon; ++t) {
      out[r] += batch.costs[r * batch.horizon + t];
    }
  }
  return out;
}

double unbiased_std(const std::vector<double>& values) {
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (values.size() - 1.0));
}

// Per-weight mean costs at one timestep index (0-based).
std::vector<double> per_weight_means(const RolloutBatch& batch, int t) {
  std::vector<double> mu(batch.weight_draws, 0.0);
  for (int m = 0; m < batch.weight_draws; ++m) {
    for (int n = 0; n < batch.noise_draws; ++n) {
      mu[m] += batch.costs[(static_cast<std::size_t>(m) * batch.noise_draws +
                            n) * batch.horizon + t];
    }
    mu[m] /= batch.noise_draws;
  }
  return mu;
}

}  // namespace

double stddev_risk_objective(const RolloutBatch& batch, double beta) {
  const std::size_t rollouts =
      static_cast<std::size_t>(batch.weight_draws) * batch.noise_draws;
  if (rollouts < 2) {
    throw std::invalid_argument("stddev_risk_objective: need M*N >= 2");
  }
  const std::vector<double> episodes = episode_costs(batch);
  const double mean =
      std::accumulate(episodes.begin(), episodes.end(), 0.0) / rollouts;
  return mean + beta * unbiased_std(episodes);
}

double bias_risk_objective(const RolloutBatch& batch, double beta) {
  if (batch.weight_draws < 2) {
    throw std::invalid_argument("bias_risk_objective: need M >= 2");
  }
  double objective = 0.0;
  for (int t = 0; t < batch.horizon; ++t) {
    const std::vector<double> mu = per_weight_means(batch, t);
    const double mean =
        std::accumulate(mu.begin(), mu.end(), 0.0) / mu.size();
    objective += mean + beta * unbiased_std(mu);
  }
  return objective;
}

namespace {

double objective_value(const RolloutBatch& batch, const RolloutConfig& config) {
  switch (config.risk_mode) {
    case RiskMode::none:
      return expected_cost_objective(batch);
    case RiskMode::stddev:
      return stddev_risk_objective(batch, config.beta);
    case RiskMode::bias:
      return bias_risk_objective(batch, config.beta);
  }
  throw std::logic_error("unreachable risk mode");
}

// d objective / d c_{m,n}(t), as a dense (m*n, t) table.
Eigen::MatrixXd cost_cotangents(const RolloutBatch& batch,
                                const RolloutConfig& config) {
  const int M = batch.weight_draws;
  const int N = batch.noise_draws;
  const int T = batch.horizon;
  const double inv_mn = 1.0 / (static_cast<double>(M) * N);
  Eigen::MatrixXd cot = Eigen::MatrixXd::Constant(M * N, T, inv_mn);
  if (config.risk_mode == RiskMode::none || config.beta == 0.0) return cot;

  if (config.risk_mode == RiskMode::stddev) {
    const std::vector<double> episodes = episode_costs(batch);
    const double mean =
        std::accumulate(episodes.begin(), episodes.end(), 0.0) /
        episodes.size();
    const double sd = unbiased_std(episodes);
    if (sd > 0.0) {
      for (std::size_t r = 0; r < episodes.size(); ++r) {
        const double extra = config.beta * (episodes[r] - mean) /
                             ((episodes.size() - 1.0) * sd);
        cot.row(static_cast<int>(r)).array() += extra;
      }
    }
    return cot;
  }

  // bias mode: per timestep, through the per-weight means.
  for (int t = 0; t < T; ++t) {
    const std::vector<double> mu = per_weight_means(batch, t);
    const double mean =
        std::accumulate(mu.begin(), mu.end(), 0.0) / mu.size();
    const double sd = unbiased_std(mu);
    if (sd <= 0.0) continue;
    for (int m = 0; m < M; ++m) {
      const double extra =
          config.beta * (mu[m] - mean) / ((M - 1.0) * sd) / N;
      for (int n = 0; n < N; ++n) cot(m * N + n, t) += extra;
    }
  }
  return cot;
}

}  // namespace

PolicyGradient policy_gradient(const bnn::Posterior& posterior,
                               const PolicyNet& policy,
                               const Eigen::VectorXd& s0,
                               const RolloutConfig& config,
                               const CostModel& cost, std::uint64_t seed) {
  const RolloutBatch batch =
      rollout_batch(posterior, policy, s0, config, cost, seed);
  PolicyGradient result;
  result.objective = objective_value(batch, config);
  result.grad = mlp::Params::zeros(policy.arch);

  const Eigen::MatrixXd cot = cost_cotangents(batch, config);
  const int state_dim = batch.state_dim;
  const int action_dim = static_cast<int>(policy.action_low.size());
  Eigen::VectorXd dyn_input(state_dim + action_dim + 1);

  for (int m = 0; m < batch.weight_draws; ++m) {
    const mlp::Params& dyn = batch.weight_samples[m];
    for (int n = 0; n < batch.noise_draws; ++n) {
      const int row = m * batch.noise_draws + n;
      Eigen::VectorXd adj = Eigen::VectorXd::Zero(state_dim);
      for (int t = batch.horizon; t >= 1; --t) {
        adj += cot(row, t - 1) * cost.gradient(batch.state(m, n, t));
        const Eigen::VectorXd prev = batch.state(m, n, t - 1);
        const Eigen::VectorXd raw = mlp::forward_unchecked(policy.params, prev);
        dyn_input.head(state_dim) = prev;
        dyn_input.segment(state_dim, action_dim) =
            squash(raw, policy.action_low, policy.action_high);
        dyn_input[state_dim + action_dim] = batch.latent(m, n, t);
        const mlp::Gradients dg =
            mlp::backward_unchecked(dyn, dyn_input, adj);
        const Eigen::VectorXd adj_action =
            dg.input.segment(state_dim, action_dim);
        const Eigen::VectorXd cot_raw = adj_action.cwiseProduct(
            squash_derivative(raw, policy.action_low, policy.action_high));
        const mlp::Gradients pg =
            mlp::backward_unchecked(policy.params, prev, cot_raw);
        for (std::size_t l = 0; l < result.grad.weights.size(); ++l) {
          result.grad.weights[l] += pg.params.weights[l];
        }
        adj = dg.input.head(state_dim) + pg.input;
      }
    }
  }
  for (const auto& w : result.grad.weights) {
    if (!w.allFinite()) {
      throw std::runtime_error("policy_gradient: non-finite gradient");
    }
  }
  return result;
}

namespace {

void flatten_params(const mlp::Params& p, std::vector<double>& out) {
  out.clear();
  for (const auto& w : p.weights) {
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) out.push_back(w(i, j));
  }
}

void unflatten_params(const std::vector<double>& flat, mlp::Params& p) {
  std::size_t pos = 0;
  for (auto& w : p.weights) {
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = flat[pos++];
  }
}

}  // namespace

PolicyTrainResult train_policy(const bnn::Posterior& posterior,
                               const PolicyNet& initial,
                               const Eigen::MatrixXd& start_pool,
                               const RolloutConfig& config,
                               const CostModel& cost, int train_steps,
                               double step_size, std::uint64_t seed) {
  initial.validate();
  config.validate();
  if (start_pool.rows() < 1) {
    throw std::invalid_argument("train_policy: empty start-state pool");
  }
  if (train_steps < 0 || step_size <= 0.0) {
    throw std::invalid_argument("train_policy: bad optimizer settings");
  }

  PolicyTrainResult result;
  result.policy = initial;
  if (train_steps == 0) return result;

  std::vector<double> flat, grad_flat, step_grad;
  flatten_params(result.policy.params, flat);
  Adam opt(flat.size(), step_size);
  Rng start_rng(derive_seed(seed, 0x50));
  std::uniform_int_distribution<int> pick(0,
                                          static_cast<int>(start_pool.rows()) - 1);

  for (int step = 0; step < train_steps; ++step) {
    mlp::Params acc = mlp::Params::zeros(result.policy.arch);
    double obj_acc = 0.0;
    for (int b = 0; b < config.starts_per_step; ++b) {
      const Eigen::VectorXd s0 = start_pool.row(pick(start_rng)).transpose();
      PolicyGradient pg;
      try {
        pg = policy_gradient(posterior, result.policy, s0, config, cost,
                             derive_seed(seed, static_cast<std::uint64_t>(step),
                                         static_cast<std::uint64_t>(b)));
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train_policy: diverged at step " +
                                 std::to_string(step) + ": " + e.what());
      }
      obj_acc += pg.objective;
      for (std::size_t l = 0; l < acc.weights.size(); ++l) {
        acc.weights[l] += pg.grad.weights[l] / config.starts_per_step;
      }
    }
    result.objective_trace.push_back(obj_acc / config.starts_per_step);
    flatten_params(acc, grad_flat);
    opt.update(flat, grad_flat);
    unflatten_params(flat, result.policy.params);
  }
  return result;
}

ModelBiasReport evaluate_model_bias(const PolicyNet& policy,
                                    const bnn::Posterior& posterior,
                                    const envs::GroundTruthMdp& mdp,
                                    const Eigen::MatrixXd& start_pool,
                                    int reps_true, const RolloutConfig& config,
                                    std::uint64_t seed) {
  policy.validate();
  config.validate();
  if (reps_true < 1) {
    throw std::invalid_argument("evaluate_model_bias: need reps_true >= 1");
  }
  if (start_pool.rows() < 1) {
    throw std::invalid_argument("evaluate_model_bias: empty start pool");
  }
  const int T = config.horizon;
  const int num_starts = static_cast<int>(start_pool.rows());
  const CostModel cost = cost_model_from_mdp(mdp);

  ModelBiasReport report;
  report.per_timestep_gap = Eigen::VectorXd::Zero(T);
  for (int s_idx = 0; s_idx < num_starts; ++s_idx) {
    const Eigen::VectorXd s0 = start_pool.row(s_idx).transpose();

    Eigen::VectorXd true_mean = Eigen::VectorXd::Zero(T);
    for (int rep = 0; rep < reps_true; ++rep) {
      Rng rng(derive_seed(seed, 0x7E, static_cast<std::uint64_t>(s_idx),
                          static_cast<std::uint64_t>(rep)));
      Eigen::VectorXd s = s0;
      for (int t = 0; t < T; ++t) {
        s = mdp.step(s, policy.act(s), rng);
        true_mean[t] += mdp.cost(s);
      }
    }
    true_mean /= reps_true;

    const RolloutBatch batch = rollout_batch(
        posterior, policy, s0, config, cost,
        derive_seed(seed, 0x40, static_cast<std::uint64_t>(s_idx)));
    Eigen::VectorXd model_mean = Eigen::VectorXd::Zero(T);
    for (int m = 0; m < batch.weight_draws; ++m) {
      for (int n = 0; n < batch.noise_draws; ++n) {
        for (int t = 1; t <= T; ++t) model_mean[t - 1] += batch.cost(m, n, t);
      }
    }
    model_mean /= static_cast<double>(batch.weight_draws) * batch.noise_draws;

    report.per_timestep_gap += (true_mean - model_mean).cwiseAbs();
    report.expected_true_cost += true_mean.sum();
    report.expected_model_cost += model_mean.sum();
  }
  report.per_timestep_gap /= num_starts;
  report.expected_true_cost /= num_starts;
  report.expected_model_cost /= num_starts;
  report.bias = report.per_timestep_gap.sum();
  return report;
}

std::vector<FrontierRecord> frontier(const bnn::Posterior& posterior,
                                     const envs::GroundTruthMdp& mdp,
                                     const std::vector<double>& betas,
                                     RiskMode risk_mode,
                                     const std::vector<std::uint64_t>& seeds,
                                     const RolloutConfig& base_config,
                                     const Eigen::MatrixXd& start_pool,
                                     const FrontierParams& params) {
  if (betas.empty()) throw std::invalid_argument("frontier: empty beta list");
  if (seeds.empty()) throw std::invalid_argument("frontier: empty seed list");
  const CostModel cost = cost_model_from_mdp(mdp);

  std::vector<FrontierRecord> records;
  for (std::uint64_t seed : seeds) {
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
      RolloutConfig config = base_config;
      config.beta = betas[bi];
      config.risk_mode = betas[bi] == 0.0 ? RiskMode::none : risk_mode;

      const std::uint64_t run_seed = derive_seed(seed, 0xF0, bi);
      const PolicyNet initial =
          init_policy(mdp.state_dim, params.policy_hidden, mdp.action_low,
                      mdp.action_high, run_seed);
      const PolicyTrainResult trained =
          train_policy(posterior, initial, start_pool, config, cost,
                       params.train_steps, params.step_size, run_seed);

      Eigen::MatrixXd eval_starts(params.eval_starts, mdp.state_dim);
      Rng eval_rng(derive_seed(seed, 0xE7A));
      for (int i = 0; i < params.eval_starts; ++i) {
        eval_starts.row(i) = mdp.sample_initial_state(eval_rng).transpose();
      }
      const ModelBiasReport report = evaluate_model_bias(
          trained.policy, posterior, mdp, eval_starts, params.reps_true,
          config, derive_seed(seed, 0xE8, bi));

      records.push_back({betas[bi], seed, report.expected_model_cost,
                         report.expected_true_cost, report.bias});
    }
  }
  return records;
}

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

constexpr int kPolicyFormatVersion = 1;

}  // namespace

std::string to_json_string(const PolicyNet& policy) {
  json doc;
  doc["format_version"] = kPolicyFormatVersion;
  doc["arch"] = policy.arch.layer_sizes;
  json low = json::array(), high = json::array();
  for (int i = 0; i < policy.action_low.size(); ++i) {
    low.push_back(policy.action_low[i]);
    high.push_back(policy.action_high[i]);
  }
  doc["action_low"] = std::move(low);
  doc["action_high"] = std::move(high);
  json weights = json::array();
  for (const auto& w : policy.params.weights) weights.push_back(matrix_to_json(w));
  doc["weights"] = std::move(weights);
  return doc.dump(2);
}

PolicyNet policy_from_json_string(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("format_version").get<int>() != kPolicyFormatVersion) {
    throw std::invalid_argument("policy JSON: unsupported format_version");
  }
  PolicyNet p;
  p.arch.layer_sizes = doc.at("arch").get<std::vector<int>>();
  const auto& low = doc.at("action_low");
  const auto& high = doc.at("action_high");
  p.action_low.resize(low.size());
  p.action_high.resize(high.size());
  for (std::size_t i = 0; i < low.size(); ++i) {
    p.action_low[i] = low.at(i).get<double>();
    p.action_high[i] = high.at(i).get<double>();
  }
  for (const auto& w : doc.at("weights")) {
    p.params.weights.push_back(matrix_from_json(w));
  }
  p.validate();
  return p;
}

void save_policy(const PolicyNet& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_policy: cannot open " + path);
  out << to_json_string(policy) << "\n";
}

PolicyNet load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_policy: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return policy_from_json_string(text);
}

}  // namespace lvbnn::policy
