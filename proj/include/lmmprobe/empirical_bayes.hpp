#pragma once

#include <vector>

#include <Eigen/Core>

namespace lmmprobe {

// Standardized statistics T_k = beta_k / S_k with two-sided normal p-values.
// Entries with S_k^2 <= 0 are masked and carry no statistic.
struct TestStatistics {
  Eigen::VectorXd t;
  Eigen::VectorXd pvalues;
  std::vector<char> defined;

  Eigen::Index defined_count() const;
  Eigen::VectorXd defined_values() const;  // compacted statistics
  Eigen::VectorXd defined_pvalues() const;
};

// Gaussian kernel density estimate of the statistic mixture evaluated at the
// points used to build it.
struct MixtureDensityEstimate {
  double bandwidth = 0.0;
  Eigen::VectorXd evaluations;
  double floor = 1e-10;
};

TestStatistics test_statistics(const Eigen::VectorXd& beta, const Eigen::VectorXd& s2);

// Null-proportion estimate: #(P_k >= lambda) / (p (1 - lambda)), clamped to
// [1/p, 1].
double storey_pi0(const Eigen::VectorXd& pvalues, double lambda);

// Rule-of-thumb bandwidth 0.9 min(sd, IQR/1.34) n^{-1/5}, with a degenerate
// fallback of 1e-3 max(1, |t_1|) when the spread is zero.
double silverman_bandwidth(const Eigen::VectorXd& t);

double kde_evaluate(const Eigen::VectorXd& centers, double bandwidth, double x);

// Density estimate over the given statistics, evaluated at each of them; all
// inputs are treated as defined.  Requires at least 2 statistics.
MixtureDensityEstimate kde(const Eigen::VectorXd& t);

// p_k = 1 - pi0 f0(T_k) / fhat(T_k), clamped to [0, 1]; masked entries get 0.
// density.evaluations must align with stats.t (entries for masked statistics
// are ignored).
Eigen::VectorXd posterior_probs(const TestStatistics& stats, double pi0,
                                const MixtureDensityEstimate& density);

}  // namespace lmmprobe
