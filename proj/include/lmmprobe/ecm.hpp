#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lmmprobe/dataset.hpp"
#include "lmmprobe/moments.hpp"

namespace lmmprobe {

// Configuration for the four-cycle estimator.  The Wishart prior on G^{-1}
// uses scale (rho C)^{-1} with C = 0 and rho = r + 1 throughout; with C = 0
// the G update reduces to the plain average of the b second-moment blocks.
struct EcmConfig {
  long max_iterations = 1000;
  // chi-square(1) quantile driving the stopping rule.  By default the value
  // is read as an upper tail mass (threshold ~2.706 at 0.1); set
  // convergence_lower_tail for the lower-quantile reading (~0.016 at 0.1).
  double convergence_quantile = 0.1;
  bool convergence_lower_tail = false;
  double storey_lambda = 0.1;
  // Step-size schedule; defaults to q(t) = 1/(t+1) with t starting at 1.
  std::function<double(long)> learning_rate;
  // Number of trailing v columns treated as fixed-effect adjustments only
  // (no random effect); the random-effect design is the remaining r - a
  // leading columns.
  int adjust_covariates = 0;
  std::uint64_t seed = 0;
  int workers = 1;

  double q(long t) const {
    return learning_rate ? learning_rate(t) : 1.0 / static_cast<double>(t + 1);
  }
  double convergence_threshold() const;
  void check() const;
};

struct EcmCounters {
  long var_floor = 0;      // floored variance subtractions
  long ridge_retries = 0;  // singular Grams retried with a ridge
  long excluded = 0;       // partitions excluded after a failed retry
  long psi_ridge = 0;      // G inversions needing the ridge floor
};

// All per-iteration state of the estimator.
struct EcmState {
  Eigen::VectorXd beta;   // p
  Eigen::VectorXd s2;     // p, squared posterior standard errors (0 = undefined)
  Eigen::VectorXd probs;  // p, inclusion probabilities
  Eigen::VectorXd omega0;  // r (+ adjustments)
  double alpha0 = 0.0;
  double tau0 = 0.0;
  double sigma2 = 0.0;
  Eigen::MatrixXd g;  // r_re x r_re
  WMoments wm;
  RandomEffectMoments rem;
  CrossMoments cross;
  long t = 0;
  std::vector<double> cc_trace;      // one entry per completed iteration
  std::vector<double> loglik_trace;  // [0] = value at initialization
  double pi0 = 1.0;
  bool all_null_stop = false;
  EcmCounters counters;
  Eigen::Index r_re = 0;  // random-effect columns of v

  // Internal cycle scratch, exposed for white-box tests.
  Eigen::VectorXd prev_w0, prev_var_w0;       // E2 state of the previous iteration
  Eigen::VectorXd m1_beta_hat, m1_s2_hat;     // fresh M1 estimates
  std::vector<char> m1_solved;
  Eigen::VectorXd vbm;                        // stacked (V_i b_i)_j for current rem
  PsiBlocks psi;                              // blocks at the current (sigma2, g)
};

struct FitResult {
  EcmState state;
  Eigen::VectorXd beta_bar;           // alpha0 * probs .* beta
  std::vector<Eigen::Index> selected;  // {k : probs_k > 0.5}
  bool converged = false;
  bool all_null = false;
  long iterations = 0;
  bool standardized_fit = false;
  std::optional<StandardizationRecord> standardization;
};

// One partition's conditional-maximization solve.  `sandwich` is the
// unit-variance posterior covariance A^{-1} B A^{-1}, where A is the
// moment-filled Gram and B the Gram of plugged-in first moments; the engine
// scales it by the fresh sigma2.  Structurally zero columns (zero diagonal in
// A) are dropped and their coefficients reported as 0.
struct PartitionSolution {
  Eigen::VectorXd xi;
  Eigen::MatrixXd sandwich;
  bool used_ridge = false;
  bool failed = false;
};

EcmState init_state(const ClusteredDataset& dataset, const EcmConfig& config);

// Partition k >= 0 solves the regression of Y on [x_k, V, W_k, Vb];
// solve_partition_zero drops the x_k column and uses the W0 moments.
PartitionSolution solve_partition(const ClusteredDataset& dataset, const EcmState& state,
                                  Eigen::Index k);
PartitionSolution solve_partition_zero(const ClusteredDataset& dataset, const EcmState& state);

void m1_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config);
void e1_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config);
void m2_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config);
// Returns the convergence criterion computed against the previous iteration.
double e2_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config);

// CC = log(M) max_ij (w0 - prev_w0)^2 / prev_var_w0 with the conventions:
// zero variance and zero change contribute 0; zero variance with movement
// yields +infinity.
std::pair<double, bool> convergence_check(const Eigen::VectorXd& w0,
                                          const Eigen::VectorXd& prev_w0,
                                          const Eigen::VectorXd& prev_var_w0, Eigen::Index m,
                                          double threshold);

double conditional_log_likelihood(const ClusteredDataset& dataset, const EcmState& state);

FitResult fit(const ClusteredDataset& dataset, const EcmConfig& config);

}  // namespace lmmprobe
