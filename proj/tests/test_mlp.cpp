#include "lvbnn/mlp.hpp"

#include <cmath>

#include "doctest.h"
#include "lvbnn/rng.hpp"

using namespace lvbnn;

namespace {

mlp::Params random_params(const mlp::Arch& arch, Rng& rng, double scale = 0.5) {
  mlp::Params p = mlp::Params::zeros(arch);
  for (auto& w : p.weights) {
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) w(i, j) = scale * draw_normal(rng);
    }
  }
  return p;
}

Eigen::VectorXd random_vector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = draw_normal(rng);
  return v;
}

// Independent oracle: naive layer-by-layer evaluation with explicit
// scalar loops, no shared code with mlp::forward.
Eigen::VectorXd naive_forward(const mlp::Arch& arch, const mlp::Params& params,
                              const Eigen::VectorXd& input) {
  std::vector<double> a(input.data(), input.data() + input.size());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    std::vector<double> next(w.rows(), 0.0);
    for (int i = 0; i < w.rows(); ++i) {
      double acc = w(i, w.cols() - 1);
      for (int j = 0; j + 1 < w.cols(); ++j) acc += w(i, j) * a[j];
      next[i] = (l + 1 < params.weights.size() && acc < 0.0) ? 0.0 : acc;
    }
    a = std::move(next);
  }
  Eigen::VectorXd out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
  return out;
}

double scalar_objective(const mlp::Arch& arch, const mlp::Params& params,
                        const Eigen::VectorXd& input,
                        const Eigen::VectorXd& cotangent) {
  return cotangent.dot(mlp::forward(arch, params, input));
}

}  // namespace

TEST_CASE("forward: all-zero params give zero output") {
  mlp::Arch arch{{3, 4, 2}};
  const Eigen::VectorXd out =
      mlp::forward(arch, mlp::Params::zeros(arch), Eigen::VectorXd::Ones(3));
  CHECK(out.isZero(0.0));
}

TEST_CASE("forward: single-layer identity map") {
  mlp::Arch arch{{3, 3}};
  mlp::Params p = mlp::Params::zeros(arch);
  p.weights[0].leftCols(3) = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd v(3);
  v << 0.5, -1.25, 3.0;
  CHECK(mlp::forward(arch, p, v) == v);
}

TEST_CASE("forward matches naive oracle on random 2-20-20-1 nets") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    mlp::Arch arch{{2, 20, 20, 1}};
    const mlp::Params p = random_params(arch, rng);
    const Eigen::VectorXd x = random_vector(2, rng);
    const Eigen::VectorXd got = mlp::forward(arch, p, x);
    const Eigen::VectorXd expect = naive_forward(arch, p, x);
    REQUIRE(got.size() == expect.size());
    CHECK(got[0] == doctest::Approx(expect[0]).epsilon(1e-12));
  }
}

TEST_CASE("forward: dimension mismatch rejected with shape diagnostic") {
  mlp::Arch arch{{3, 4, 2}};
  CHECK_THROWS_WITH_AS(
      mlp::forward(arch, mlp::Params::zeros(arch), Eigen::VectorXd::Ones(5)),
      doctest::Contains("input length 5"), std::invalid_argument);
}

TEST_CASE("forward is deterministic (bit-identical repeats)") {
  Rng rng(11);
  mlp::Arch arch{{4, 8, 3}};
  const mlp::Params p = random_params(arch, rng);
  const Eigen::VectorXd x = random_vector(4, rng);
  const Eigen::VectorXd a = mlp::forward(arch, p, x);
  const Eigen::VectorXd b = mlp::forward(arch, p, x);
  CHECK(a == b);
}

TEST_CASE("backward: all-zero params give zero input gradient") {
  mlp::Arch arch{{3, 4, 2}};
  const auto grads = mlp::backward(arch, mlp::Params::zeros(arch),
                                   Eigen::VectorXd::Ones(3),
                                   Eigen::VectorXd::Ones(2));
  CHECK(grads.input.isZero(0.0));
}

TEST_CASE("backward: linear single layer gives W^T u on non-bias columns") {
  Rng rng(13);
  mlp::Arch arch{{3, 2}};
  mlp::Params p = mlp::Params::zeros(arch);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) p.weights[0](i, j) = draw_normal(rng);
  const Eigen::VectorXd u = random_vector(2, rng);
  const auto grads = mlp::backward(arch, p, random_vector(3, rng), u);
  const Eigen::VectorXd expect = p.weights[0].leftCols(3).transpose() * u;
  CHECK((grads.input - expect).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(17);
  const double step = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    mlp::Arch arch{{3, 10, 5, 2}};
    mlp::Params p = random_params(arch, rng);
    const Eigen::VectorXd x = random_vector(3, rng);
    const Eigen::VectorXd u = random_vector(2, rng);
    const auto grads = mlp::backward(arch, p, x, u);

    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      for (int i = 0; i < p.weights[l].rows(); ++i) {
        for (int j = 0; j < p.weights[l].cols(); ++j) {
          mlp::Params plus = p, minus = p;
          plus.weights[l](i, j) += step;
          minus.weights[l](i, j) -= step;
          const double fd = (scalar_objective(arch, plus, x, u) -
                             scalar_objective(arch, minus, x, u)) /
                            (2 * step);
          const double an = grads.params.weights[l](i, j);
          CHECK(std::abs(an - fd) <=
                1e-4 * std::max({std::abs(an), std::abs(fd), 1e-6}));
        }
      }
    }
    for (int d = 0; d < x.size(); ++d) {
      Eigen::VectorXd plus = x, minus = x;
      plus[d] += step;
      minus[d] -= step;
      const double fd = (scalar_objective(arch, p, plus, u) -
                         scalar_objective(arch, p, minus, u)) /
                        (2 * step);
      CHECK(std::abs(grads.input[d] - fd) <=
            1e-4 * std::max({std::abs(fd), std::abs(grads.input[d]), 1e-6}));
    }
  }
}

TEST_CASE("bias-free one-hidden-layer net is positively homogeneous") {
  Rng rng(19);
  mlp::Arch arch{{3, 6, 2}};
  mlp::Params p = random_params(arch, rng);
  p.weights[0].col(3).setZero();
  p.weights[1].col(6).setZero();
  const Eigen::VectorXd x = random_vector(3, rng);
  for (double c : {0.5, 2.0, 7.25}) {
    const Eigen::VectorXd scaled = mlp::forward(arch, p, (c * x).eval());
    const Eigen::VectorXd base = c * mlp::forward(arch, p, x);
    CHECK((scaled - base).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("params validation rejects bad shapes and non-finite entries") {
  mlp::Arch arch{{2, 3, 1}};
  mlp::Params p = mlp::Params::zeros(arch);
  p.weights[0].resize(3, 5);
  CHECK_THROWS_AS(mlp::forward(arch, p, Eigen::VectorXd::Zero(2)),
                  std::invalid_argument);
  mlp::Params q = mlp::Params::zeros(arch);
  q.weights[1](0, 0) = std::nan("");
  CHECK_THROWS_AS(mlp::forward(arch, q, Eigen::VectorXd::Zero(2)),
                  std::invalid_argument);
}
