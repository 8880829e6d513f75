#include "lvbnn/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace lvbnn::entropy {

double digamma(double x) {
  if (!(x > 0.0)) {
    throw std::invalid_argument("digamma: requires x > 0, got " +
                                std::to_string(x));
  }
  // psi(x) = psi(x+1) - 1/x until the asymptotic series is accurate.
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  // ln x - 1/(2x) - sum B_2n / (2n x^2n), truncated where terms drop
  // below 1e-12 for x >= 6.
  const double inv2 = 1.0 / (x * x);
  double series = 0.0;
  double p = inv2;
  series += p / 12.0;            // B2/(2 x^2)
  p *= inv2;
  series -= p / 120.0;           // B4/(4 x^4)
  p *= inv2;
  series += p / 252.0;           // B6/(6 x^6)
  p *= inv2;
  series -= p / 240.0;           // B8/(8 x^8)
  p *= inv2;
  series += p / 132.0;           // B10/(10 x^10)
  p *= inv2;
  series -= p * 691.0 / 32760.0; // B12/(12 x^12)
  p *= inv2;
  series += p / 12.0;            // B14/(14 x^14)
  return result + std::log(x) - 0.5 / x - series;
}

namespace {

// Exact k-d tree over row indices of a fixed point matrix. Nodes are
// stored in build order; leaves hold small index runs.
class KdTree {
 public:
  KdTree(const Eigen::MatrixXd& points, int leaf_size = 16)
      : points_(points), leaf_size_(leaf_size) {
    indices_.resize(points.rows());
    std::iota(indices_.begin(), indices_.end(), 0);
    root_ = build(0, static_cast<int>(indices_.size()));
  }

  // Squared distance to the k-th nearest neighbor of row `query`,
  // excluding `query` itself.
  double kth_sq_dist(int query, int k) const {
    std::priority_queue<double> best;  // max-heap of k best squared distances
    search(root_, query, k, best);
    return best.top();
  }

 private:
  struct Node {
    int left = -1, right = -1;
    int begin = 0, end = 0;   // leaf index range
    int split_dim = -1;
    double split_val = 0.0;
    Eigen::VectorXd lo, hi;   // bounding box
  };

  int build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    const int d = static_cast<int>(points_.cols());
    node.lo = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());
    node.hi = Eigen::VectorXd::Constant(d, -std::numeric_limits<double>::infinity());
    for (int i = begin; i < end; ++i) {
      node.lo = node.lo.cwiseMin(points_.row(indices_[i]).transpose());
      node.hi = node.hi.cwiseMax(points_.row(indices_[i]).transpose());
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= leaf_size_) return id;

    int dim = 0;
    (node.hi - node.lo).maxCoeff(&dim);
    const int mid = (begin + end) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid,
                     indices_.begin() + end, [&](int a, int b) {
                       return points_(a, dim) < points_(b, dim);
                     });
    nodes_[id].split_dim = dim;
    nodes_[id].split_val = points_(indices_[mid], dim);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  double box_sq_dist(const Node& node, int query) const {
    double acc = 0.0;
    for (int j = 0; j < points_.cols(); ++j) {
      const double v = points_(query, j);
      double gap = 0.0;
      if (v < node.lo[j]) gap = node.lo[j] - v;
      else if (v > node.hi[j]) gap = v - node.hi[j];
      acc += gap * gap;
    }
    return acc;
  }

  void search(int id, int query, int k, std::priority_queue<double>& best) const {
    const Node& node = nodes_[id];
    if (static_cast<int>(best.size()) == k && box_sq_dist(node, query) > best.top()) {
      return;
    }
    if (node.split_dim < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = indices_[i];
        if (idx == query) continue;
        const double d2 = (points_.row(idx) - points_.row(query)).squaredNorm();
        if (static_cast<int>(best.size()) < k) {
          best.push(d2);
        } else if (d2 < best.top()) {
          best.pop();
          best.push(d2);
        }
      }
      return;
    }
    const bool go_left_first =
        points_(query, node.split_dim) < node.split_val;
    search(go_left_first ? node.left : node.right, query, k, best);
    search(go_left_first ? node.right : node.left, query, k, best);
  }

  const Eigen::MatrixXd& points_;
  int leaf_size_;
  std::vector<int> indices_;
  std::vector<Node> nodes_;
  int root_ = 0;
};

void check_samples(const Eigen::MatrixXd& points, int k) {
  const int n = static_cast<int>(points.rows());
  if (n < 2) throw std::invalid_argument("entropy: need at least 2 samples");
  if (points.cols() < 1) throw std::invalid_argument("entropy: need d >= 1");
  if (!points.allFinite()) {
    throw std::invalid_argument("entropy: non-finite sample entry");
  }
  if (k < 1 || k > n - 1) {
    throw std::invalid_argument("entropy: require 1 <= k <= n-1, got k=" +
                                std::to_string(k) + " with n=" +
                                std::to_string(n));
  }
}

constexpr int kBruteForceLimit = 4096;

}  // namespace

std::vector<double> kth_neighbor_distances(const Eigen::MatrixXd& points,
                                           int k) {
  check_samples(points, k);
  const int n = static_cast<int>(points.rows());
  std::vector<double> out(n);
  if (n <= kBruteForceLimit) {
    std::vector<double> d2(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        d2[j] = (points.row(j) - points.row(i)).squaredNorm();
      }
      d2[i] = std::numeric_limits<double>::infinity();
      std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
      out[i] = std::sqrt(d2[k - 1]);
    }
    return out;
  }
  KdTree tree(points);
  for (int i = 0; i < n; ++i) {
    out[i] = std::sqrt(tree.kth_sq_dist(i, k));
  }
  return out;
}

EntropyEstimate kl_entropy(const Eigen::MatrixXd& points, int k) {
  check_samples(points, k);
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());

  bool all_identical = true;
  for (int i = 1; i < n && all_identical; ++i) {
    all_identical = (points.row(i) == points.row(0));
  }
  if (all_identical) {
    throw std::invalid_argument(
        "kl_entropy: all samples identical, entropy undefined from data");
  }

  const std::vector<double> dist = kth_neighbor_distances(points, k);
  EntropyEstimate est;
  est.n = n;
  est.k = k;
  constexpr double kDistanceFloor = 1e-12;
  double log_sum = 0.0;
  for (double r : dist) {
    if (r < kDistanceFloor) {
      ++est.clamped_distances;
      r = kDistanceFloor;
    }
    log_sum += std::log(r);
  }
  // Unit-ball volume V_d = pi^{d/2} / Gamma(d/2 + 1).
  const double log_vd = 0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d + 1.0);
  est.nats = digamma(n) - digamma(k) + log_vd +
             (static_cast<double>(d) / n) * log_sum;
  return est;
}

}  // namespace lvbnn::entropy
