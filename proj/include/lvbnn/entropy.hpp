#pragma once

#include <Eigen/Core>
#include <vector>

namespace lvbnn::entropy {

/// Digamma function for x > 0. Upward recurrence to x >= 6, then the
/// asymptotic series; absolute error below 1e-10 on (0, inf).
double digamma(double x);

/// Euclidean distance from each row of `points` (n x d) to its k-th
/// nearest other row. Exact: brute force for small n, k-d tree above.
/// Duplicate points yield zero distances, which are passed through.
std::vector<double> kth_neighbor_distances(const Eigen::MatrixXd& points,
                                           int k);

struct EntropyEstimate {
  double nats = 0.0;
  int n = 0;
  int k = 0;
  int clamped_distances = 0;  // zero distances floored at 1e-12
};

/// Kozachenko-Leonenko differential entropy estimate:
///   psi(n) - psi(k) + log V_d + (d/n) * sum_i log r_i
/// with V_d the unit-ball volume and r_i the k-th neighbor distance.
EntropyEstimate kl_entropy(const Eigen::MatrixXd& points, int k);

}  // namespace lvbnn::entropy
