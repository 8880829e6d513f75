// Command-line front end: data generation, BNN training, uncertainty
// scoring, active learning, transition collection, policy search and
// frontier sweeps. Tabular artifacts are CSV, models and configs are
// JSON, and every command is bit-reproducible for a fixed seed.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lvbnn/bnn.hpp"
#include "lvbnn/decompose.hpp"
#include "lvbnn/envs.hpp"
#include "lvbnn/policy.hpp"
#include "lvbnn/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lvbnn;

namespace {

// ---------------------------------------------------------------------------
// Run configuration: defaults, JSON loading with unknown-key rejection.

struct BnnSection {
  std::vector<int> arch{20, 20};  // hidden layer widths
  double lambda = 1.0;
  double gamma = 1.0;
  double sigma = 0.01;
  double alpha = 1.0;
  int mc_samples = 20;
  int steps = 5000;
  double step_size = 1e-2;
  int minibatch = 32;
};

struct DecomposeSection {
  int M = 50;   // weight draws
  int L = 500;  // samples per entropy estimate
  int k = 3;    // nearest neighbor
};

struct PolicySection {
  int T = 100;
  int M = 50;
  int N = 25;
  double beta = 0.0;
  std::string risk_mode = "none";
  int train_steps = 2000;
  double step_size = 1e-3;
};

struct RunConfig {
  BnnSection bnn;
  DecomposeSection decompose;
  PolicySection policy;
  std::uint64_t seed = 0;
};

void reject_unknown_keys(const json& j, std::vector<std::string> allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument("config: unknown key \"" + key + "\" in " +
                                  where);
    }
  }
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  reject_unknown_keys(doc, {"bnn", "decompose", "policy", "seed"}, "top level");
  maybe_get(doc, "seed", cfg.seed);
  if (doc.contains("bnn")) {
    const json& b = doc.at("bnn");
    reject_unknown_keys(b,
                        {"arch", "lambda", "gamma", "sigma", "alpha",
                         "mc_samples", "steps", "step_size", "minibatch"},
                        "bnn");
    maybe_get(b, "arch", cfg.bnn.arch);
    maybe_get(b, "lambda", cfg.bnn.lambda);
    maybe_get(b, "gamma", cfg.bnn.gamma);
    maybe_get(b, "sigma", cfg.bnn.sigma);
    maybe_get(b, "alpha", cfg.bnn.alpha);
    maybe_get(b, "mc_samples", cfg.bnn.mc_samples);
    maybe_get(b, "steps", cfg.bnn.steps);
    maybe_get(b, "step_size", cfg.bnn.step_size);
    maybe_get(b, "minibatch", cfg.bnn.minibatch);
  }
  if (doc.contains("decompose")) {
    const json& d = doc.at("decompose");
    reject_unknown_keys(d, {"M", "L", "k"}, "decompose");
    maybe_get(d, "M", cfg.decompose.M);
    maybe_get(d, "L", cfg.decompose.L);
    maybe_get(d, "k", cfg.decompose.k);
  }
  if (doc.contains("policy")) {
    const json& p = doc.at("policy");
    reject_unknown_keys(p,
                        {"T", "M", "N", "beta", "risk_mode", "train_steps",
                         "step_size"},
                        "policy");
    maybe_get(p, "T", cfg.policy.T);
    maybe_get(p, "M", cfg.policy.M);
    maybe_get(p, "N", cfg.policy.N);
    maybe_get(p, "beta", cfg.policy.beta);
    maybe_get(p, "risk_mode", cfg.policy.risk_mode);
    maybe_get(p, "train_steps", cfg.policy.train_steps);
    maybe_get(p, "step_size", cfg.policy.step_size);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

json run_config_to_json(const RunConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["bnn"] = {{"arch", cfg.bnn.arch},
                {"lambda", cfg.bnn.lambda},
                {"gamma", cfg.bnn.gamma},
                {"sigma", cfg.bnn.sigma},
                {"alpha", cfg.bnn.alpha},
                {"mc_samples", cfg.bnn.mc_samples},
                {"steps", cfg.bnn.steps},
                {"step_size", cfg.bnn.step_size},
                {"minibatch", cfg.bnn.minibatch}};
  doc["decompose"] = {{"M", cfg.decompose.M},
                      {"L", cfg.decompose.L},
                      {"k", cfg.decompose.k}};
  doc["policy"] = {{"T", cfg.policy.T},
                   {"M", cfg.policy.M},
                   {"N", cfg.policy.N},
                   {"beta", cfg.policy.beta},
                   {"risk_mode", cfg.policy.risk_mode},
                   {"train_steps", cfg.policy.train_steps},
                   {"step_size", cfg.policy.step_size}};
  return doc;
}

// The effective configuration (defaults merged with file and flag
// overrides) is echoed next to every command's outputs.
void write_effective_config(const RunConfig& cfg, const std::string& out_path) {
  const fs::path dir = fs::path(out_path).parent_path();
  const fs::path target =
      dir.empty() ? fs::path("effective_config.json")
                  : dir / "effective_config.json";
  std::ofstream out(target, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + target.string());
  }
  out << run_config_to_json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// CSV helpers: shortest-round-trip doubles, strict parsing with row
// numbers in diagnostics.

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << '\n';
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument(path + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_csv_line(line);
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != table.header.size()) {
      throw std::invalid_argument(path + ": row " + std::to_string(row_no) +
                                  ": expected " +
                                  std::to_string(table.header.size()) +
                                  " fields, got " +
                                  std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      try {
        std::size_t used = 0;
        row[i] = std::stod(fields[i], &used);
        if (used != fields[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw std::invalid_argument(path + ": row " + std::to_string(row_no) +
                                    ": field \"" + table.header[i] +
                                    "\" is not a number: \"" + fields[i] +
                                    "\"");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

int count_prefixed(const std::vector<std::string>& header,
                   const std::string& prefix, std::size_t from) {
  int count = 0;
  for (std::size_t i = from; i < header.size(); ++i) {
    if (header[i] == prefix + std::to_string(count)) {
      ++count;
    } else {
      break;
    }
  }
  return count;
}

// Regression CSVs carry x_*/y_* columns; transition CSVs carry
// s_*/a_*/sp_* and are trained as (s, a) -> s'.
bnn::Dataset dataset_from_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.rows.empty()) {
    throw std::invalid_argument(path + ": no data rows");
  }
  const int n = static_cast<int>(table.rows.size());
  bnn::Dataset data;
  if (!table.header.empty() && table.header[0].rfind("x_", 0) == 0) {
    const int dx = count_prefixed(table.header, "x_", 0);
    const int dy = count_prefixed(table.header, "y_", dx);
    if (dx < 1 || dy < 1 ||
        static_cast<std::size_t>(dx + dy) != table.header.size()) {
      throw std::invalid_argument(path + ": expected header x_0..,y_0..");
    }
    data.inputs.resize(n, dx);
    data.targets.resize(n, dy);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < dx; ++c) data.inputs(r, c) = table.rows[r][c];
      for (int c = 0; c < dy; ++c) data.targets(r, c) = table.rows[r][dx + c];
    }
    return data;
  }
  if (!table.header.empty() && table.header[0].rfind("s_", 0) == 0) {
    const int ds = count_prefixed(table.header, "s_", 0);
    const int da = count_prefixed(table.header, "a_", ds);
    const int dsp = count_prefixed(table.header, "sp_", ds + da);
    if (ds < 1 || da < 1 || dsp != ds ||
        static_cast<std::size_t>(ds + da + dsp) != table.header.size()) {
      throw std::invalid_argument(path +
                                  ": expected header s_0..,a_0..,sp_0..");
    }
    data.inputs.resize(n, ds + da);
    data.targets.resize(n, ds);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < ds + da; ++c) data.inputs(r, c) = table.rows[r][c];
      for (int c = 0; c < ds; ++c) {
        data.targets(r, c) = table.rows[r][ds + da + c];
      }
    }
    return data;
  }
  throw std::invalid_argument(path + ": unrecognized CSV schema");
}

Eigen::MatrixXd start_pool_from_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int ds = count_prefixed(table.header, "s_", 0);
  if (ds < 1 || table.rows.empty()) {
    throw std::invalid_argument(path + ": expected transition CSV with s_*");
  }
  Eigen::MatrixXd pool(table.rows.size(), ds);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (int c = 0; c < ds; ++c) pool(r, c) = table.rows[r][c];
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Shared pieces.

envs::StochasticFunctionEnv env_by_name(const std::string& name) {
  if (name == "heteroskedastic") return envs::heteroskedastic_env();
  if (name == "bimodal") return envs::bimodal_env();
  throw std::invalid_argument("unknown env \"" + name +
                              "\" (expected heteroskedastic or bimodal)");
}

policy::RiskMode risk_mode_by_name(const std::string& name) {
  if (name == "none") return policy::RiskMode::none;
  if (name == "stddev") return policy::RiskMode::stddev;
  if (name == "bias") return policy::RiskMode::bias;
  throw std::invalid_argument("unknown risk mode \"" + name +
                              "\" (expected none, stddev or bias)");
}

bnn::TrainConfig train_config_from(const RunConfig& cfg) {
  bnn::TrainConfig tc;
  tc.alpha = cfg.bnn.alpha;
  tc.mc_samples = cfg.bnn.mc_samples;
  tc.steps = cfg.bnn.steps;
  tc.step_size = cfg.bnn.step_size;
  tc.minibatch_size = cfg.bnn.minibatch;
  tc.seed = cfg.seed;
  return tc;
}

decompose::Config decompose_config_from(const RunConfig& cfg) {
  decompose::Config dc;
  dc.weight_draws = cfg.decompose.M;
  dc.samples_per_entropy = cfg.decompose.L;
  dc.neighbor_k = cfg.decompose.k;
  dc.seed = cfg.seed;
  return dc;
}

policy::RolloutConfig rollout_config_from(const RunConfig& cfg) {
  policy::RolloutConfig rc;
  rc.horizon = cfg.policy.T;
  rc.weight_draws = cfg.policy.M;
  rc.noise_draws = cfg.policy.N;
  rc.beta = cfg.policy.beta;
  rc.risk_mode = risk_mode_by_name(cfg.policy.risk_mode);
  rc.seed = cfg.seed;
  return rc;
}

std::string sibling_path(const std::string& out, const std::string& suffix) {
  fs::path p(out);
  fs::path named = p.parent_path() / (p.stem().string() + suffix);
  return named.string();
}

struct GridSpec {
  double lo = 0.0, hi = 0.0;
  int count = 0;
};

GridSpec parse_grid(const std::string& spec) {
  GridSpec g;
  const auto c1 = spec.find(':');
  const auto c2 = spec.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) {
    throw std::invalid_argument("grid must be min:max:count, got \"" + spec +
                                "\"");
  }
  try {
    g.lo = std::stod(spec.substr(0, c1));
    g.hi = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
    g.count = std::stoi(spec.substr(c2 + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("grid must be min:max:count, got \"" + spec +
                                "\"");
  }
  if (g.count < 1) throw std::invalid_argument("grid: need count >= 1");
  return g;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

void cmd_gen(const RunConfig& cfg, const std::string& env_name, int n,
             const std::string& out) {
  const auto env = env_by_name(env_name);
  const bnn::Dataset data = envs::make_dataset(env, n, cfg.seed);
  std::vector<std::vector<double>> rows(data.size());
  for (int i = 0; i < data.size(); ++i) {
    rows[i] = {data.inputs(i, 0), data.targets(i, 0)};
  }
  write_csv(out, {"x_0", "y_0"}, rows);
  write_effective_config(cfg, out);
}

void cmd_train(const RunConfig& cfg, const std::string& data_path,
               const std::string& out) {
  const bnn::Dataset data = dataset_from_csv(data_path);
  const mlp::Arch arch = decompose::make_arch(
      static_cast<int>(data.inputs.cols()),
      static_cast<int>(data.targets.cols()), cfg.bnn.arch);
  const Eigen::VectorXd sigma =
      Eigen::VectorXd::Constant(data.targets.cols(), cfg.bnn.sigma);
  const bnn::Posterior init = bnn::init_posterior(
      arch, data.size(), cfg.bnn.lambda, cfg.bnn.gamma, sigma, cfg.seed);
  const bnn::TrainResult result =
      bnn::train(init, data, train_config_from(cfg));
  bnn::save_posterior(result.posterior, out);
  std::vector<std::vector<double>> trace(result.energy_trace.size());
  for (std::size_t i = 0; i < result.energy_trace.size(); ++i) {
    trace[i] = {static_cast<double>(i), result.energy_trace[i]};
  }
  write_csv(sibling_path(out, "_energy_trace.csv"), {"step", "energy"}, trace);
  write_effective_config(cfg, out);
}

void cmd_score(const RunConfig& cfg, const std::string& model_path,
               const std::string& grid_spec, const std::string& out) {
  const bnn::Posterior posterior = bnn::load_posterior(model_path);
  if (posterior.feature_dim() != 1) {
    throw std::invalid_argument("score: grid scoring needs a 1-D model");
  }
  const GridSpec grid = parse_grid(grid_spec);
  std::vector<std::vector<double>> rows;
  rows.reserve(grid.count);
  for (int i = 0; i < grid.count; ++i) {
    const double x =
        grid.count == 1
            ? grid.lo
            : grid.lo + (grid.hi - grid.lo) * i / (grid.count - 1.0);
    decompose::Config dc = decompose_config_from(cfg);
    dc.seed = derive_seed(cfg.seed, 0x55, static_cast<std::uint64_t>(i));
    const auto score = decompose::epistemic_score(
        posterior, Eigen::VectorXd::Constant(1, x), dc);
    rows.push_back(
        {x, score.total_entropy, score.aleatoric_entropy,
         score.epistemic_score});
  }
  write_csv(out, {"x_0", "total_entropy", "aleatoric_entropy",
                  "epistemic_score"},
            rows);
  write_effective_config(cfg, out);
}

void cmd_al(const RunConfig& cfg, const std::string& env_name, int init_n,
            int rounds, int per_round, const std::string& strategy,
            const std::string& out) {
  const auto env = env_by_name(env_name);
  decompose::AlStrategy strat;
  if (strategy == "epistemic") {
    strat = decompose::AlStrategy::epistemic;
  } else if (strategy == "random") {
    strat = decompose::AlStrategy::random;
  } else {
    throw std::invalid_argument("unknown strategy \"" + strategy +
                                "\" (expected epistemic or random)");
  }
  decompose::ModelConfig mc;
  mc.hidden = cfg.bnn.arch;
  mc.lambda = cfg.bnn.lambda;
  mc.gamma = cfg.bnn.gamma;
  mc.sigma = cfg.bnn.sigma;
  const auto records =
      decompose::al_loop(env, init_n, rounds, per_round, strat,
                         decompose_config_from(cfg), train_config_from(cfg),
                         mc);
  std::vector<std::vector<double>> rows(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    rows[i] = {static_cast<double>(records[i].round),
               static_cast<double>(records[i].dataset_size),
               records[i].test_log_likelihood,
               records[i].mean_epistemic_score};
  }
  write_csv(out, {"round", "dataset_size", "test_log_likelihood",
                  "mean_epistemic_score"},
            rows);
  write_effective_config(cfg, out);
}

void cmd_collect(const RunConfig& cfg, int episodes, const std::string& out) {
  const auto mdp = envs::narrow_passage_mdp();
  const auto batch = envs::collect_batch(mdp, episodes, cfg.seed);
  std::vector<std::vector<double>> rows(batch.size());
  for (int r = 0; r < batch.size(); ++r) {
    rows[r] = {batch.states(r, 0), batch.actions(r, 0),
               batch.next_states(r, 0)};
  }
  write_csv(out, {"s_0", "a_0", "sp_0"}, rows);
  write_effective_config(cfg, out);
}

void cmd_policy_train(const RunConfig& cfg, const std::string& model_path,
                      const std::string& data_path, const std::string& out) {
  const bnn::Posterior posterior = bnn::load_posterior(model_path);
  const Eigen::MatrixXd pool = start_pool_from_csv(data_path);
  const auto mdp = envs::narrow_passage_mdp();
  const policy::PolicyNet initial =
      policy::init_policy(mdp.state_dim, {20, 20}, mdp.action_low,
                          mdp.action_high, cfg.seed);
  const auto result = policy::train_policy(
      posterior, initial, pool, rollout_config_from(cfg),
      policy::cost_model_from_mdp(mdp), cfg.policy.train_steps,
      cfg.policy.step_size, cfg.seed);
  policy::save_policy(result.policy, out);
  std::vector<std::vector<double>> trace(result.objective_trace.size());
  for (std::size_t i = 0; i < result.objective_trace.size(); ++i) {
    trace[i] = {static_cast<double>(i), result.objective_trace[i]};
  }
  write_csv(sibling_path(out, "_objective_trace.csv"), {"step", "objective"},
            trace);
  write_effective_config(cfg, out);
}

void cmd_policy_eval(const RunConfig& cfg, const std::string& policy_path,
                     const std::string& model_path, int eval_starts,
                     int reps_true, const std::string& out) {
  const policy::PolicyNet net = policy::load_policy(policy_path);
  const bnn::Posterior posterior = bnn::load_posterior(model_path);
  const auto mdp = envs::narrow_passage_mdp();
  if (eval_starts < 1) {
    throw std::invalid_argument("policy-eval: need starts >= 1");
  }
  Eigen::MatrixXd starts(eval_starts, mdp.state_dim);
  Rng rng(derive_seed(cfg.seed, 0xE7A));
  for (int i = 0; i < eval_starts; ++i) {
    starts.row(i) = mdp.sample_initial_state(rng).transpose();
  }
  const auto report = policy::evaluate_model_bias(
      net, posterior, mdp, starts, reps_true, rollout_config_from(cfg),
      cfg.seed);
  write_csv(out, {"expected_true_cost", "expected_model_cost", "model_bias"},
            {{report.expected_true_cost, report.expected_model_cost,
              report.bias}});
  std::vector<std::vector<double>> gaps(report.per_timestep_gap.size());
  for (int t = 0; t < report.per_timestep_gap.size(); ++t) {
    gaps[t] = {static_cast<double>(t + 1), report.per_timestep_gap[t]};
  }
  write_csv(sibling_path(out, "_gaps.csv"), {"t", "gap"}, gaps);
  write_effective_config(cfg, out);
}

void cmd_frontier(const RunConfig& cfg, const std::string& model_path,
                  const std::string& data_path,
                  const std::vector<double>& betas,
                  const std::vector<std::uint64_t>& seeds, int eval_starts,
                  int reps_true, const std::string& out) {
  const bnn::Posterior posterior = bnn::load_posterior(model_path);
  const Eigen::MatrixXd pool = start_pool_from_csv(data_path);
  const auto mdp = envs::narrow_passage_mdp();
  policy::FrontierParams params;
  params.train_steps = cfg.policy.train_steps;
  params.step_size = cfg.policy.step_size;
  params.reps_true = reps_true;
  params.eval_starts = eval_starts;
  const auto records = policy::frontier(
      posterior, mdp, betas, risk_mode_by_name(cfg.policy.risk_mode), seeds,
      rollout_config_from(cfg), pool, params);
  std::vector<std::vector<double>> rows(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    rows[i] = {records[i].beta, static_cast<double>(records[i].seed),
               records[i].expected_model_cost, records[i].expected_true_cost,
               records[i].model_bias};
  }
  write_csv(out, {"beta", "seed", "expected_model_cost", "expected_true_cost",
                  "model_bias"},
            rows);
  write_effective_config(cfg, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-variable BNNs: uncertainty decomposition, active "
               "learning and risk-sensitive policy search"};
  app.require_subcommand(1);
  app.fallthrough();  // let --seed/--config appear after the subcommand

  std::string config_path;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "Run configuration JSON")
      ->each([](const std::string&) {});
  app.add_option("--seed", seed_flag, "Master seed (overrides config)")
      ->each([&](const std::string&) { seed_given = true; });

  // gen
  auto* gen = app.add_subcommand("gen", "Sample a dataset from a toy env");
  std::string gen_env, gen_out;
  int gen_n = 0;
  gen->add_option("env", gen_env, "heteroskedastic | bimodal")->required();
  gen->add_option("n", gen_n, "number of samples")->required();
  gen->add_option("seed", seed_flag, "master seed")
      ->each([&](const std::string&) { seed_given = true; });
  std::string gen_out_pos;
  gen->add_option("outfile", gen_out_pos, "output CSV");
  gen->add_option("--out", gen_out, "output CSV");

  // train
  auto* train = app.add_subcommand("train", "Train a BNN on a CSV dataset");
  std::string train_data, train_out;
  train->add_option("--data", train_data, "dataset or transition CSV")
      ->required();
  train->add_option("--out", train_out, "model JSON path")->required();

  // score
  auto* score = app.add_subcommand("score", "Uncertainty scores on a grid");
  std::string score_model, score_grid, score_out;
  score->add_option("--model", score_model, "model JSON")->required();
  score->add_option("--grid", score_grid, "min:max:count")->required();
  score->add_option("--out", score_out, "score CSV")->required();

  // al
  auto* al = app.add_subcommand("al", "Active-learning loop");
  std::string al_env, al_strategy = "epistemic", al_out;
  int al_rounds = 0, al_init_n = 50, al_per_round = 10;
  al->add_option("--env", al_env, "heteroskedastic | bimodal")->required();
  al->add_option("--rounds", al_rounds, "acquisition rounds")->required();
  al->add_option("--init-n", al_init_n, "initial dataset size");
  al->add_option("--per-round", al_per_round, "points acquired per round");
  al->add_option("--strategy", al_strategy, "epistemic | random");
  al->add_option("--out", al_out, "learning-curve CSV")->required();

  // collect
  auto* collect = app.add_subcommand("collect",
                                     "Log transitions with the behavior "
                                     "policy");
  int collect_episodes = 0;
  std::string collect_out;
  collect->add_option("--episodes", collect_episodes, "episodes to run")
      ->required();
  collect->add_option("--out", collect_out, "transition CSV")->required();

  // policy-train
  auto* ptrain = app.add_subcommand("policy-train",
                                    "Train a policy against a dynamics model");
  std::string ptrain_model, ptrain_data, ptrain_out;
  ptrain->add_option("--model", ptrain_model, "dynamics model JSON")
      ->required();
  ptrain->add_option("--data", ptrain_data, "transition CSV (start pool)")
      ->required();
  ptrain->add_option("--out", ptrain_out, "policy JSON path")->required();
  std::string ptrain_risk;
  double ptrain_beta = 0.0;
  bool ptrain_risk_given = false, ptrain_beta_given = false;
  int ptrain_steps = -1;
  ptrain->add_option("--risk-mode", ptrain_risk, "none | stddev | bias")
      ->each([&](const std::string&) { ptrain_risk_given = true; });
  ptrain->add_option("--beta", ptrain_beta, "risk weight")
      ->each([&](const std::string&) { ptrain_beta_given = true; });
  ptrain->add_option("--train-steps", ptrain_steps, "optimizer steps");

  // policy-eval
  auto* peval = app.add_subcommand("policy-eval",
                                   "Model bias of a policy vs ground truth");
  std::string peval_policy, peval_model, peval_out;
  int peval_starts = 20, peval_reps = 200;
  peval->add_option("--policy", peval_policy, "policy JSON")->required();
  peval->add_option("--model", peval_model, "dynamics model JSON")->required();
  peval->add_option("--starts", peval_starts, "evaluation start states");
  peval->add_option("--reps", peval_reps, "ground-truth rollouts per start");
  peval->add_option("--out", peval_out, "report CSV")->required();

  // frontier
  auto* front = app.add_subcommand("frontier", "Risk/cost frontier sweep");
  std::string front_model, front_data, front_out;
  std::vector<double> front_betas;
  std::vector<std::uint64_t> front_seeds;
  int front_starts = 20, front_reps = 200;
  front->add_option("--model", front_model, "dynamics model JSON")->required();
  front->add_option("--data", front_data, "transition CSV (start pool)")
      ->required();
  front->add_option("--betas", front_betas, "comma-separated risk weights")
      ->required()
      ->delimiter(',');
  front->add_option("--seeds", front_seeds, "comma-separated seeds")
      ->required()
      ->delimiter(',');
  front->add_option("--starts", front_starts, "evaluation start states");
  front->add_option("--reps", front_reps, "ground-truth rollouts per start");
  front->add_option("--out", front_out, "frontier CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_run_config(config_path);
    if (seed_given) cfg.seed = seed_flag;

    if (gen->parsed()) {
      if (gen_out.empty()) gen_out = gen_out_pos;
      if (gen_out.empty()) {
        throw std::invalid_argument("gen: missing output path");
      }
      cmd_gen(cfg, gen_env, gen_n, gen_out);
    } else if (train->parsed()) {
      cmd_train(cfg, train_data, train_out);
    } else if (score->parsed()) {
      cmd_score(cfg, score_model, score_grid, score_out);
    } else if (al->parsed()) {
      cmd_al(cfg, al_env, al_init_n, al_rounds, al_per_round, al_strategy,
             al_out);
    } else if (collect->parsed()) {
      cmd_collect(cfg, collect_episodes, collect_out);
    } else if (ptrain->parsed()) {
      if (ptrain_risk_given) cfg.policy.risk_mode = ptrain_risk;
      if (ptrain_beta_given) cfg.policy.beta = ptrain_beta;
      if (ptrain_steps >= 0) cfg.policy.train_steps = ptrain_steps;
      cmd_policy_train(cfg, ptrain_model, ptrain_data, ptrain_out);
    } else if (peval->parsed()) {
      cmd_policy_eval(cfg, peval_policy, peval_model, peval_starts, peval_reps,
                      peval_out);
    } else if (front->parsed()) {
      cmd_frontier(cfg, front_model, front_data, front_betas, front_seeds,
                   front_starts, front_reps, front_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
