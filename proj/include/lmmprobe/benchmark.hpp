#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lmmprobe/ecm.hpp"

namespace lmmprobe {

struct BenchConfig {
  int iterations = 10;
  Eigen::Index n_clusters = 50;
  Eigen::Index obs_per_cluster = 6;
  int r = 1;
  double pi = 0.1;
  double beta_value = 0.75;
  double sigma2 = 10.0;
  double g_scale = 5.0;
  std::uint64_t seed = 1;
};

struct ScalingPoint {
  Eigen::Index p = 0;
  Eigen::Index m_obs = 0;
  std::vector<double> iteration_seconds;
  double per_iteration_median = 0.0;
  double total_seconds = 0.0;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  double linear_r2 = 0.0;       // fit of median iteration time against p
  Eigen::Index max_matrix_dim = 0;  // largest engine-allocated dense dimension
  std::int64_t max_matrix_cells = 0;
};

// Runs a fixed number of estimator iterations on generated data for each p,
// timing each iteration.  Data generation and I/O are excluded from timing.
// Engine allocations are tracked so the report can assert that the largest
// dense temporary stays at max(M, r+3+adjustments) and never reaches p x p.
ScalingReport scaling_run(const std::vector<Eigen::Index>& p_values, const BenchConfig& base);

// Least-squares R^2 of y against x.
double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lmmprobe
