#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lmmprobe/dataset.hpp"
#include "lmmprobe/rng.hpp"

namespace lmmprobe {

// Synthetic-data generator settings.  p must be a perfect square: predictors
// live on a sqrt(p) x sqrt(p) grid and inherit a squared-exponential
// correlation structure from a Gaussian random field on that grid.
struct SimulationConfig {
  Eigen::Index p = 225;
  Eigen::Index n_clusters = 50;
  Eigen::Index obs_per_cluster = 6;
  int r = 1;
  double pi = 0.1;
  double beta_value = 0.75;
  double sigma2 = 10.0;
  Eigen::MatrixXd g;  // r x r true covariance; defaults to 5 * I when empty
  double grf_length_scale = 3.0;
  std::uint64_t seed = 0;
  bool per_cluster_x = false;  // one field draw per cluster instead of per row
  bool random_sign = false;    // randomize the signs of the nonzero effects

  void check() const;
};

struct SimulationTruth {
  Eigen::VectorXi gamma;  // p inclusion indicators
  Eigen::VectorXd beta;   // p effect sizes (beta_value on the support)
  Eigen::MatrixXd b;      // N x r drawn random effects
  Eigen::MatrixXd g;
  double sigma2 = 0.0;
  Eigen::VectorXd omega;
};

// Train/test halves split within each cluster in time order, plus the full
// generating ground truth.
struct SimulatedDataset {
  ClusteredDataset train;
  ClusteredDataset test;
  SimulationTruth truth;
};

// One zero-mean unit-variance field on a side x side grid with covariance
// exp(-d^2 / (2 l^2)) in grid distance, sampled through the Kronecker
// factorization of the separable kernel.
Eigen::VectorXd sample_grf(Eigen::Index side, double length_scale, Rng& rng);
Eigen::VectorXd sample_grf(Eigen::Index side, double length_scale, std::uint64_t seed);

SimulatedDataset generate(const SimulationConfig& config);

// The full factorial simulation grid: 3 grid sizes x 2 signal proportions x
// 2 effect sizes x 2 random-effect counts x 2 noise levels x 2 covariance
// cases = 96 settings.
std::vector<SimulationConfig> setting_grid();

}  // namespace lmmprobe
