#include "lvbnn/bnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "lvbnn/adam.hpp"

namespace lvbnn::bnn {

void Posterior::validate() const {
  arch.validate();
  if (arch.input_dim() < 2) {
    throw std::invalid_argument(
        "bnn::Posterior: input slot must hold >= 1 feature plus the latent");
  }
  if (static_cast<int>(weight_factors.size()) != arch.num_layers()) {
    throw std::invalid_argument("bnn::Posterior: factor layer count mismatch");
  }
  if (latent_mean.size() != latent_log_variance.size()) {
    throw std::invalid_argument("bnn::Posterior: latent factor size mismatch");
  }
  if (prior_weight_variance <= 0.0 || prior_latent_variance <= 0.0) {
    throw std::invalid_argument("bnn::Posterior: lambda and gamma must be > 0");
  }
  if (noise_variance.size() != arch.output_dim() ||
      (noise_variance.array() <= 0.0).any()) {
    throw std::invalid_argument(
        "bnn::Posterior: Sigma must be positive, one entry per output");
  }
}

void Dataset::validate() const {
  if (inputs.rows() < 1 || inputs.rows() != targets.rows()) {
    throw std::invalid_argument("bnn::Dataset: need N >= 1 matching rows");
  }
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw std::invalid_argument("bnn::Dataset: non-finite entry");
  }
}

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("bnn::TrainConfig: alpha must be in [0, 1]");
  }
  if (mc_samples < 1) {
    throw std::invalid_argument("bnn::TrainConfig: mc_samples must be >= 1");
  }
  if (step_size <= 0.0 || steps < 0 || minibatch_size < 1) {
    throw std::invalid_argument("bnn::TrainConfig: bad optimizer settings");
  }
}

Posterior init_posterior(const mlp::Arch& arch, int n_data, double lambda,
                         double gamma, const Eigen::VectorXd& sigma,
                         std::uint64_t seed) {
  arch.validate();
  if (n_data < 1) {
    throw std::invalid_argument("init_posterior: need n_data >= 1");
  }
  if (lambda <= 0.0 || gamma <= 0.0 || (sigma.array() <= 0.0).any()) {
    throw std::invalid_argument(
        "init_posterior: lambda, gamma and Sigma must be > 0");
  }
  Posterior p;
  p.arch = arch;
  p.prior_weight_variance = lambda;
  p.prior_latent_variance = gamma;
  p.noise_variance = sigma;
  Rng rng(derive_seed(seed, 0x1717));
  const double init_log_var = std::log(1e-3);
  for (int l = 1; l < static_cast<int>(arch.layer_sizes.size()); ++l) {
    const int rows = arch.layer_sizes[l];
    const int cols = arch.layer_sizes[l - 1] + 1;
    const double fan_in = arch.layer_sizes[l - 1];
    FactorMatrix fm;
    fm.mean.resize(rows, cols);
    fm.log_variance = Eigen::MatrixXd::Constant(rows, cols, init_log_var);
    const double scale = std::sqrt(1.0 / fan_in);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        fm.mean(i, j) = scale * draw_normal(rng);
      }
    }
    p.weight_factors.push_back(std::move(fm));
  }
  p.latent_mean = Eigen::VectorXd::Zero(n_data);
  p.latent_log_variance =
      Eigen::VectorXd::Constant(n_data, std::log(gamma));
  p.validate();
  return p;
}

mlp::Params sample_weights(const Posterior& posterior, Rng& rng) {
  mlp::Params params;
  for (const auto& fm : posterior.weight_factors) {
    Eigen::MatrixXd w(fm.mean.rows(), fm.mean.cols());
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) {
        w(i, j) = fm.mean(i, j) +
                  std::sqrt(std::exp(fm.log_variance(i, j))) * draw_normal(rng);
      }
    }
    params.weights.push_back(std::move(w));
  }
  return params;
}

double gaussian_log_density(const Eigen::VectorXd& y,
                            const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& sigma) {
  if (y.size() != mean.size() || y.size() != sigma.size()) {
    throw std::invalid_argument("gaussian_log_density: length mismatch");
  }
  if ((sigma.array() <= 0.0).any()) {
    throw std::invalid_argument("gaussian_log_density: Sigma must be > 0");
  }
  double acc = 0.0;
  for (int k = 0; k < y.size(); ++k) {
    const double diff = y[k] - mean[k];
    acc += -0.5 * std::log(2.0 * M_PI * sigma[k]) -
           diff * diff / (2.0 * sigma[k]);
  }
  return acc;
}

double kl_gaussian(const GaussianFactor& q, double prior_variance) {
  if (prior_variance <= 0.0) {
    throw std::invalid_argument("kl_gaussian: prior variance must be > 0");
  }
  const double v = q.variance();
  return 0.5 * (v / prior_variance + q.mean * q.mean / prior_variance - 1.0 +
                std::log(prior_variance / v));
}

namespace {

PosteriorGrads zero_grads(const Posterior& posterior) {
  PosteriorGrads g;
  for (const auto& fm : posterior.weight_factors) {
    g.weights.push_back({Eigen::MatrixXd::Zero(fm.mean.rows(), fm.mean.cols()),
                         Eigen::MatrixXd::Zero(fm.mean.rows(), fm.mean.cols())});
  }
  g.latent_mean = Eigen::VectorXd::Zero(posterior.num_data());
  g.latent_log_variance = Eigen::VectorXd::Zero(posterior.num_data());
  return g;
}

}  // namespace

EnergyResult alpha_energy(const Posterior& posterior, const Dataset& data,
                          const std::vector<int>& batch,
                          const TrainConfig& config, Rng& rng) {
  posterior.validate();
  data.validate();
  config.validate();
  if (batch.empty()) {
    throw std::invalid_argument("alpha_energy: empty batch");
  }
  const int n_total = posterior.num_data();
  for (int idx : batch) {
    if (idx < 0 || idx >= n_total) {
      throw std::invalid_argument("alpha_energy: batch index out of range");
    }
  }
  if (data.size() != n_total) {
    throw std::invalid_argument(
        "alpha_energy: dataset size does not match latent factor count");
  }

  const int num_samples = config.mc_samples;
  const int batch_size = static_cast<int>(batch.size());
  const double scale = static_cast<double>(n_total) / batch_size;
  const double alpha = config.alpha;
  const auto& sigma = posterior.noise_variance;

  // Weight draws first (fixed order), then per-datapoint latent draws.
  std::vector<mlp::Params> weight_samples;
  weight_samples.reserve(num_samples);
  for (int k = 0; k < num_samples; ++k) {
    weight_samples.push_back(sample_weights(posterior, rng));
  }
  Eigen::MatrixXd latents(batch_size, num_samples);
  for (int b = 0; b < batch_size; ++b) {
    const int n = batch[b];
    const double sd = std::sqrt(std::exp(posterior.latent_log_variance[n]));
    for (int k = 0; k < num_samples; ++k) {
      latents(b, k) = posterior.latent_mean[n] + sd * draw_normal(rng);
    }
  }

  // Log-likelihoods l_{b,k} and the network outputs they came from.
  // Cases are batched column-wise per weight sample.
  Eigen::MatrixXd loglik(batch_size, num_samples);
  const int input_dim = posterior.arch.input_dim();
  Eigen::MatrixXd net_inputs(input_dim, batch_size);
  Eigen::MatrixXd targets(posterior.arch.output_dim(), batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const int n = batch[b];
    net_inputs.col(b).head(input_dim - 1) = data.inputs.row(n).transpose();
    targets.col(b) = data.targets.row(n).transpose();
  }
  std::vector<Eigen::MatrixXd> outputs(num_samples);
  for (int k = 0; k < num_samples; ++k) {
    net_inputs.row(input_dim - 1) = latents.col(k).transpose();
    outputs[k] = mlp::forward_batch_unchecked(weight_samples[k], net_inputs);
    for (int b = 0; b < batch_size; ++b) {
      loglik(b, k) =
          gaussian_log_density(targets.col(b), outputs[k].col(b), sigma);
    }
  }

  EnergyResult result;
  result.grads = zero_grads(posterior);

  // Per-datapoint local terms and their d/dl coefficients.
  Eigen::MatrixXd coeff(batch_size, num_samples);  // d local_b / d l_{b,k}
  double local_sum = 0.0;
  for (int b = 0; b < batch_size; ++b) {
    if (!loglik.row(b).allFinite()) {
      throw std::runtime_error(
          "alpha_energy: non-finite log-likelihood at batch index " +
          std::to_string(batch[b]));
    }
    if (alpha > 0.0) {
      // local = -(1/alpha) * log( (1/K) sum_k exp(alpha * l_k) ),
      // with max-subtraction.
      const Eigen::ArrayXd scaled = alpha * loglik.row(b).transpose().array();
      const double mx = scaled.maxCoeff();
      const Eigen::ArrayXd ex = (scaled - mx).exp();
      const double denom = ex.sum();
      local_sum += -(mx + std::log(denom / num_samples)) / alpha;
      coeff.row(b) = (-(ex / denom)).transpose();
    } else {
      local_sum += -loglik.row(b).mean();
      coeff.row(b).setConstant(-1.0 / num_samples);
    }
  }

  // KL terms: all weight factors, plus the batch latents scaled to an
  // unbiased full-data estimate.
  double kl_weights = 0.0;
  for (std::size_t l = 0; l < posterior.weight_factors.size(); ++l) {
    const auto& fm = posterior.weight_factors[l];
    auto& gw = result.grads.weights[l];
    for (int i = 0; i < fm.mean.rows(); ++i) {
      for (int j = 0; j < fm.mean.cols(); ++j) {
        const GaussianFactor f{fm.mean(i, j), fm.log_variance(i, j)};
        kl_weights += kl_gaussian(f, posterior.prior_weight_variance);
        gw.mean(i, j) += f.mean / posterior.prior_weight_variance;
        gw.log_variance(i, j) +=
            0.5 * (f.variance() / posterior.prior_weight_variance - 1.0);
      }
    }
  }
  double kl_latent = 0.0;
  for (int b = 0; b < batch_size; ++b) {
    const int n = batch[b];
    const GaussianFactor f{posterior.latent_mean[n],
                           posterior.latent_log_variance[n]};
    kl_latent += kl_gaussian(f, posterior.prior_latent_variance);
    result.grads.latent_mean[n] +=
        scale * f.mean / posterior.prior_latent_variance;
    result.grads.latent_log_variance[n] +=
        scale * 0.5 * (f.variance() / posterior.prior_latent_variance - 1.0);
  }

  result.energy = scale * local_sum + kl_weights + scale * kl_latent;
  if (!std::isfinite(result.energy)) {
    throw std::runtime_error("alpha_energy: non-finite energy");
  }

  // Reparameterized likelihood gradients, batched per weight sample.
  Eigen::MatrixXd cots(posterior.arch.output_dim(), batch_size);
  for (int k = 0; k < num_samples; ++k) {
    net_inputs.row(input_dim - 1) = latents.col(k).transpose();
    // d l / d out = (y - out) / Sigma, elementwise.
    for (int b = 0; b < batch_size; ++b) {
      cots.col(b) = (scale * coeff(b, k)) *
                    ((targets.col(b) - outputs[k].col(b)).array() /
                     sigma.array()).matrix();
    }
    const mlp::BatchGradients g =
        mlp::backward_batch_unchecked(weight_samples[k], net_inputs, cots);
    for (std::size_t l = 0; l < posterior.weight_factors.size(); ++l) {
      const auto& fm = posterior.weight_factors[l];
      auto& gw = result.grads.weights[l];
      gw.mean += g.params.weights[l];
      // w = m + sqrt(v) eps, so dw/dlogv = (w - m) / 2.
      gw.log_variance += 0.5 * g.params.weights[l].cwiseProduct(
                                   weight_samples[k].weights[l] - fm.mean);
    }
    for (int b = 0; b < batch_size; ++b) {
      const int n = batch[b];
      const double g_latent = g.inputs(input_dim - 1, b);
      result.grads.latent_mean[n] += g_latent;
      result.grads.latent_log_variance[n] +=
          g_latent * 0.5 * (latents(b, k) - posterior.latent_mean[n]);
    }
  }
  return result;
}

namespace {

std::size_t variational_dim(const Posterior& p) {
  std::size_t dim = 0;
  for (const auto& fm : p.weight_factors) dim += 2 * fm.mean.size();
  return dim + 2 * p.latent_mean.size();
}

// Flat layout: per layer (mean entries row-major, then log-variance
// entries row-major), then latent means, then latent log-variances.
void flatten(const Posterior& p, std::vector<double>& out) {
  out.clear();
  out.reserve(variational_dim(p));
  for (const auto& fm : p.weight_factors) {
    for (int i = 0; i < fm.mean.rows(); ++i)
      for (int j = 0; j < fm.mean.cols(); ++j) out.push_back(fm.mean(i, j));
    for (int i = 0; i < fm.mean.rows(); ++i)
      for (int j = 0; j < fm.mean.cols(); ++j)
        out.push_back(fm.log_variance(i, j));
  }
  for (int n = 0; n < p.latent_mean.size(); ++n) out.push_back(p.latent_mean[n]);
  for (int n = 0; n < p.latent_mean.size(); ++n)
    out.push_back(p.latent_log_variance[n]);
}

void unflatten(const std::vector<double>& flat, Posterior& p) {
  std::size_t pos = 0;
  for (auto& fm : p.weight_factors) {
    for (int i = 0; i < fm.mean.rows(); ++i)
      for (int j = 0; j < fm.mean.cols(); ++j) fm.mean(i, j) = flat[pos++];
    for (int i = 0; i < fm.mean.rows(); ++i)
      for (int j = 0; j < fm.mean.cols(); ++j)
        fm.log_variance(i, j) = flat[pos++];
  }
  for (int n = 0; n < p.latent_mean.size(); ++n) p.latent_mean[n] = flat[pos++];
  for (int n = 0; n < p.latent_mean.size(); ++n)
    p.latent_log_variance[n] = flat[pos++];
}

void flatten_grads(const PosteriorGrads& g, std::vector<double>& out) {
  out.clear();
  for (const auto& fm : g.weights) {
    for (int i = 0; i < fm.mean.rows(); ++i)
      for (int j = 0; j < fm.mean.cols(); ++j) out.push_back(fm.mean(i, j));
    for (int i = 0; i < fm.mean.rows(); ++i)
      for (int j = 0; j < fm.mean.cols(); ++j)
        out.push_back(fm.log_variance(i, j));
  }
  for (int n = 0; n < g.latent_mean.size(); ++n) out.push_back(g.latent_mean[n]);
  for (int n = 0; n < g.latent_mean.size(); ++n)
    out.push_back(g.latent_log_variance[n]);
}

}  // namespace

TrainResult train(const Posterior& posterior, const Dataset& data,
                  const TrainConfig& config) {
  posterior.validate();
  data.validate();
  config.validate();
  if (data.size() != posterior.num_data()) {
    throw std::invalid_argument(
        "train: dataset size does not match latent factor count");
  }

  TrainResult result;
  result.posterior = posterior;
  if (config.steps == 0) return result;

  std::vector<double> flat, grads_flat;
  flatten(result.posterior, flat);
  Adam opt(flat.size(), config.step_size);

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(config.seed, 0x5u));
  std::size_t cursor = order.size();  // forces an initial shuffle

  const int batch_size = std::min<int>(config.minibatch_size, data.size());
  for (int step = 0; step < config.steps; ++step) {
    if (cursor + batch_size > order.size()) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    std::vector<int> batch(order.begin() + cursor,
                           order.begin() + cursor + batch_size);
    cursor += batch_size;

    Rng step_rng(derive_seed(config.seed, 0xEu, static_cast<std::uint64_t>(step)));
    EnergyResult er;
    try {
      er = alpha_energy(result.posterior, data, batch, config, step_rng);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train: diverged at step " +
                               std::to_string(step) + ": " + e.what());
    }
    result.energy_trace.push_back(er.energy);
    flatten_grads(er.grads, grads_flat);
    opt.update(flat, grads_flat);
    unflatten(flat, result.posterior);
  }
  return result;
}

SampleTensor predict_samples(const Posterior& posterior,
                             const Eigen::VectorXd& x, int weight_draws,
                             int per_weight, Rng& rng) {
  posterior.validate();
  if (weight_draws < 1 || per_weight < 1) {
    throw std::invalid_argument("predict_samples: need M >= 1 and S >= 1");
  }
  const int input_dim = posterior.arch.input_dim();
  if (x.size() != input_dim - 1) {
    throw std::invalid_argument("predict_samples: feature length mismatch");
  }
  const int output_dim = posterior.arch.output_dim();
  SampleTensor tensor;
  tensor.weight_draws = weight_draws;
  tensor.per_weight = per_weight;
  tensor.output_dim = output_dim;
  tensor.data.resize(static_cast<std::size_t>(weight_draws) * per_weight *
                     output_dim);
  const double latent_sd = std::sqrt(posterior.prior_latent_variance);
  Eigen::VectorXd net_input(input_dim);
  net_input.head(input_dim - 1) = x;
  for (int m = 0; m < weight_draws; ++m) {
    const mlp::Params w = sample_weights(posterior, rng);
    for (int s = 0; s < per_weight; ++s) {
      net_input[input_dim - 1] = latent_sd * draw_normal(rng);
      const Eigen::VectorXd out = mlp::forward_unchecked(w, net_input);
      for (int k = 0; k < output_dim; ++k) {
        tensor.at(m, s, k) =
            out[k] + std::sqrt(posterior.noise_variance[k]) * draw_normal(rng);
      }
    }
  }
  return tensor;
}

double predictive_log_likelihood(const Posterior& posterior,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y, int num_draws,
                                 Rng& rng) {
  if (num_draws < 1) {
    throw std::invalid_argument("predictive_log_likelihood: need draws >= 1");
  }
  const int input_dim = posterior.arch.input_dim();
  const double latent_sd = std::sqrt(posterior.prior_latent_variance);
  Eigen::VectorXd net_input(input_dim);
  net_input.head(input_dim - 1) = x;
  Eigen::VectorXd logs(num_draws);
  for (int s = 0; s < num_draws; ++s) {
    const mlp::Params w = sample_weights(posterior, rng);
    net_input[input_dim - 1] = latent_sd * draw_normal(rng);
    const Eigen::VectorXd out = mlp::forward_unchecked(w, net_input);
    logs[s] = gaussian_log_density(y, out, posterior.noise_variance);
  }
  const double mx = logs.maxCoeff();
  return mx + std::log((logs.array() - mx).exp().sum()) - std::log(num_draws);
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
    if (static_cast<int>(j.at(i).size()) != cols) {
      throw std::invalid_argument("posterior JSON: ragged matrix");
    }
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

constexpr int kFormatVersion = 1;

}  // namespace

std::string to_json_string(const Posterior& posterior) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["arch"] = posterior.arch.layer_sizes;
  doc["lambda"] = posterior.prior_weight_variance;
  doc["gamma"] = posterior.prior_latent_variance;
  doc["sigma"] = vector_to_json(posterior.noise_variance);
  json factors = json::array();
  for (const auto& fm : posterior.weight_factors) {
    factors.push_back({{"mean", matrix_to_json(fm.mean)},
                       {"log_variance", matrix_to_json(fm.log_variance)}});
  }
  doc["weight_factors"] = std::move(factors);
  doc["latent_factors"] = {
      {"mean", vector_to_json(posterior.latent_mean)},
      {"log_variance", vector_to_json(posterior.latent_log_variance)}};
  return doc.dump(2);
}

Posterior posterior_from_json_string(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("format_version").get<int>() != kFormatVersion) {
    throw std::invalid_argument("posterior JSON: unsupported format_version");
  }
  Posterior p;
  p.arch.layer_sizes = doc.at("arch").get<std::vector<int>>();
  p.prior_weight_variance = doc.at("lambda").get<double>();
  p.prior_latent_variance = doc.at("gamma").get<double>();
  p.noise_variance = vector_from_json(doc.at("sigma"));
  for (const auto& f : doc.at("weight_factors")) {
    p.weight_factors.push_back({matrix_from_json(f.at("mean")),
                                matrix_from_json(f.at("log_variance"))});
  }
  p.latent_mean = vector_from_json(doc.at("latent_factors").at("mean"));
  p.latent_log_variance =
      vector_from_json(doc.at("latent_factors").at("log_variance"));
  p.validate();
  return p;
}

void save_posterior(const Posterior& posterior, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_posterior: cannot open " + path);
  out << to_json_string(posterior) << "\n";
}

Posterior load_posterior(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_posterior: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return posterior_from_json_string(text);
}

}  // namespace lvbnn::bnn
