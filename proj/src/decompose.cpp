#include "lvbnn/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lvbnn/entropy.hpp"

namespace lvbnn::decompose {

void Config::validate() const {
  if (weight_draws < 1) {
    throw std::invalid_argument("decompose::Config: need weight_draws >= 1");
  }
  if (neighbor_k < 1 || samples_per_entropy <= neighbor_k) {
    throw std::invalid_argument(
        "decompose::Config: need samples_per_entropy > neighbor_k >= 1");
  }
}

BnnPredictive::BnnPredictive(const bnn::Posterior& posterior,
                             const Eigen::VectorXd& x)
    : posterior_(posterior) {
  posterior.validate();
  if (x.size() != posterior.feature_dim()) {
    throw std::invalid_argument("BnnPredictive: feature length mismatch");
  }
  net_input_.resize(posterior.arch.input_dim());
  net_input_.head(x.size()) = x;
  weights_ = mlp::Params::zeros(posterior.arch);
}

int BnnPredictive::output_dim() const { return posterior_.arch.output_dim(); }

void BnnPredictive::resample_condition(Rng& rng) {
  weights_ = bnn::sample_weights(posterior_, rng);
}

Eigen::VectorXd BnnPredictive::sample(Rng& rng) {
  net_input_[net_input_.size() - 1] =
      std::sqrt(posterior_.prior_latent_variance) * draw_normal(rng);
  Eigen::VectorXd out = mlp::forward_unchecked(weights_, net_input_);
  for (int k = 0; k < out.size(); ++k) {
    out[k] += std::sqrt(posterior_.noise_variance[k]) * draw_normal(rng);
  }
  return out;
}

namespace {

double entropy_fresh_condition(ConditionalSampler& sampler, const Config& config,
                               Rng& rng) {
  const int num = config.samples_per_entropy;
  Eigen::MatrixXd samples(num, sampler.output_dim());
  for (int i = 0; i < num; ++i) {
    sampler.resample_condition(rng);
    samples.row(i) = sampler.sample(rng).transpose();
  }
  return entropy::kl_entropy(samples, config.neighbor_k).nats;
}

double entropy_fixed_condition_avg(ConditionalSampler& sampler,
                                   const Config& config, Rng& rng) {
  const int num = config.samples_per_entropy;
  Eigen::MatrixXd samples(num, sampler.output_dim());
  double acc = 0.0;
  for (int m = 0; m < config.weight_draws; ++m) {
    sampler.resample_condition(rng);
    for (int i = 0; i < num; ++i) {
      samples.row(i) = sampler.sample(rng).transpose();
    }
    acc += entropy::kl_entropy(samples, config.neighbor_k).nats;
  }
  return acc / config.weight_draws;
}

}  // namespace

double total_entropy(ConditionalSampler& sampler, const Config& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0x707AA));
  return entropy_fresh_condition(sampler, config, rng);
}

double aleatoric_entropy(ConditionalSampler& sampler, const Config& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0xA1EA));
  return entropy_fixed_condition_avg(sampler, config, rng);
}

AcquisitionScore epistemic_score(ConditionalSampler& sampler,
                                 const Eigen::VectorXd& x,
                                 const Config& config) {
  AcquisitionScore score;
  score.x = x;
  score.total_entropy = total_entropy(sampler, config);
  score.aleatoric_entropy = aleatoric_entropy(sampler, config);
  score.epistemic_score = score.total_entropy - score.aleatoric_entropy;
  return score;
}

double total_entropy(const bnn::Posterior& posterior, const Eigen::VectorXd& x,
                     const Config& config) {
  BnnPredictive sampler(posterior, x);
  return total_entropy(sampler, config);
}

double aleatoric_entropy(const bnn::Posterior& posterior,
                         const Eigen::VectorXd& x, const Config& config) {
  BnnPredictive sampler(posterior, x);
  return aleatoric_entropy(sampler, config);
}

AcquisitionScore epistemic_score(const bnn::Posterior& posterior,
                                 const Eigen::VectorXd& x,
                                 const Config& config) {
  BnnPredictive sampler(posterior, x);
  return epistemic_score(sampler, x, config);
}

std::vector<int> acquire(const bnn::Posterior& posterior,
                         const Eigen::MatrixXd& candidates, int batch_size,
                         const Config& config) {
  config.validate();
  const int count = static_cast<int>(candidates.rows());
  if (count == 0) throw std::invalid_argument("acquire: empty candidate set");
  if (batch_size < 1 || batch_size > count) {
    throw std::invalid_argument("acquire: batch_size out of range");
  }
  std::vector<double> scores(count);
  for (int i = 0; i < count; ++i) {
    Config per = config;
    per.seed = derive_seed(config.seed, 0xCA, static_cast<std::uint64_t>(i));
    scores[i] = epistemic_score(posterior, candidates.row(i).transpose(), per)
                    .epistemic_score;
  }
  return select_top_indices(scores, batch_size);
}

std::vector<int> select_top_indices(const std::vector<double>& scores,
                                    int batch_size) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(batch_size);
  return idx;
}

VarianceDecomposition variance_decomposition(
    const std::vector<std::vector<double>>& groups) {
  const int num_groups = static_cast<int>(groups.size());
  if (num_groups < 2) {
    throw std::invalid_argument("variance_decomposition: need M >= 2 groups");
  }
  const std::size_t group_size = groups.front().size();
  if (group_size < 2) {
    throw std::invalid_argument(
        "variance_decomposition: need N >= 2 per group");
  }
  for (const auto& g : groups) {
    if (g.size() != group_size) {
      throw std::invalid_argument(
          "variance_decomposition: groups must have equal size");
    }
  }
  const double total_count = static_cast<double>(num_groups) * group_size;
  double sum = 0.0;
  for (const auto& g : groups) sum = std::accumulate(g.begin(), g.end(), sum);
  const double grand_mean = sum / total_count;

  double total_ss = 0.0;
  double within_acc = 0.0;
  for (const auto& g : groups) {
    const double mean =
        std::accumulate(g.begin(), g.end(), 0.0) / group_size;
    double ss = 0.0;
    for (double v : g) {
      total_ss += (v - grand_mean) * (v - grand_mean);
      ss += (v - mean) * (v - mean);
    }
    within_acc += ss / (group_size - 1);
  }
  VarianceDecomposition out;
  out.total_variance = total_ss / (total_count - 1.0);
  out.expected_aleatoric_variance = within_acc / num_groups;
  out.epistemic_variance = out.total_variance - out.expected_aleatoric_variance;
  return out;
}

mlp::Arch make_arch(int feature_dim, int output_dim,
                    const std::vector<int>& hidden) {
  mlp::Arch arch;
  arch.layer_sizes.push_back(feature_dim + 1);  // +1 latent input
  arch.layer_sizes.insert(arch.layer_sizes.end(), hidden.begin(), hidden.end());
  arch.layer_sizes.push_back(output_dim);
  arch.validate();
  return arch;
}

namespace {

bnn::TrainResult train_from_scratch(const bnn::Dataset& data,
                                    const ModelConfig& model_config,
                                    const bnn::TrainConfig& train_config,
                                    std::uint64_t seed) {
  const mlp::Arch arch =
      make_arch(static_cast<int>(data.inputs.cols()),
                static_cast<int>(data.targets.cols()), model_config.hidden);
  const Eigen::VectorXd sigma =
      Eigen::VectorXd::Constant(data.targets.cols(), model_config.sigma);
  bnn::Posterior init =
      bnn::init_posterior(arch, data.size(), model_config.lambda,
                          model_config.gamma, sigma, seed);
  bnn::TrainConfig cfg = train_config;
  cfg.seed = seed;
  return bnn::train(init, data, cfg);
}

}  // namespace

std::vector<AlRecord> al_loop(const envs::StochasticFunctionEnv& env,
                              int init_n, int rounds, int per_round,
                              AlStrategy strategy, const Config& config,
                              const bnn::TrainConfig& train_config,
                              const ModelConfig& model_config) {
  config.validate();
  if (init_n < 1 || rounds < 0 || per_round < 1) {
    throw std::invalid_argument("al_loop: bad loop parameters");
  }

  constexpr int kTestSetSize = 500;
  constexpr int kCandidatePool = 200;
  constexpr int kEvalGridSize = 41;
  constexpr int kLikelihoodDraws = 100;

  bnn::Dataset data =
      envs::make_dataset(env, init_n, derive_seed(config.seed, 0x11));
  const bnn::Dataset test =
      envs::make_dataset(env, kTestSetSize, derive_seed(config.seed, 0x22));

  Eigen::MatrixXd grid(kEvalGridSize, 1);
  for (int i = 0; i < kEvalGridSize; ++i) {
    grid(i, 0) = env.grid_lo +
                 (env.grid_hi - env.grid_lo) * i / (kEvalGridSize - 1.0);
  }

  std::vector<AlRecord> records;
  for (int round = 0; round <= rounds; ++round) {
    const std::uint64_t round_seed =
        derive_seed(config.seed, 0x33, static_cast<std::uint64_t>(round));
    const bnn::TrainResult trained =
        train_from_scratch(data, model_config, train_config, round_seed);

    AlRecord rec;
    rec.round = round;
    rec.dataset_size = data.size();
    Rng ll_rng(derive_seed(round_seed, 0x44));
    double ll = 0.0;
    for (int i = 0; i < test.size(); ++i) {
      ll += bnn::predictive_log_likelihood(
          trained.posterior, test.inputs.row(i).transpose(),
          test.targets.row(i).transpose(), kLikelihoodDraws, ll_rng);
    }
    rec.test_log_likelihood = ll / test.size();

    double score_acc = 0.0;
    for (int i = 0; i < kEvalGridSize; ++i) {
      Config per = config;
      per.seed = derive_seed(round_seed, 0x55, static_cast<std::uint64_t>(i));
      score_acc += epistemic_score(trained.posterior, grid.row(i).transpose(),
                                   per).epistemic_score;
    }
    rec.mean_epistemic_score = score_acc / kEvalGridSize;
    records.push_back(rec);

    if (round == rounds) break;

    Rng pool_rng(derive_seed(round_seed, 0x66));
    Eigen::MatrixXd pool(kCandidatePool, 1);
    for (int i = 0; i < kCandidatePool; ++i) {
      pool(i, 0) = env.sample_input(pool_rng);
    }
    std::vector<int> chosen;
    if (strategy == AlStrategy::epistemic) {
      Config acq = config;
      acq.seed = derive_seed(round_seed, 0x77);
      chosen = acquire(trained.posterior, pool, per_round, acq);
    } else {
      std::vector<int> idx(kCandidatePool);
      std::iota(idx.begin(), idx.end(), 0);
      Rng pick_rng(derive_seed(round_seed, 0x88));
      std::shuffle(idx.begin(), idx.end(), pick_rng);
      chosen.assign(idx.begin(), idx.begin() + per_round);
    }

    Rng label_rng(derive_seed(round_seed, 0x99));
    const int old_n = data.size();
    data.inputs.conservativeResize(old_n + per_round, Eigen::NoChange);
    data.targets.conservativeResize(old_n + per_round, Eigen::NoChange);
    for (int i = 0; i < per_round; ++i) {
      const double x = pool(chosen[i], 0);
      data.inputs(old_n + i, 0) = x;
      data.targets(old_n + i, 0) = env.sample_output(x, label_rng);
    }
  }
  return records;
}

}  // namespace lvbnn::decompose
