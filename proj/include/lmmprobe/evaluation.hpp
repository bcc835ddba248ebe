#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lmmprobe/dataset.hpp"
#include "lmmprobe/ecm.hpp"
#include "lmmprobe/simulation.hpp"

namespace lmmprobe {

struct MetricsReport {
  int fold = -1;
  double mspe = 0.0;
  double mad = 0.0;
  std::optional<double> mse_fixed;
  std::optional<double> mse_total_variance;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> mcc;
  long n_selected = 0;
  long iterations = 0;
  bool converged = false;
  bool skipped = false;
  double runtime_seconds = 0.0;
};

double mspe(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);
double mad(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// Mean over observations of (x (gamma .* beta_true) - x beta_bar)^2; both
// coefficient vectors live on the scale of x.
double mse_fixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& true_effect,
                 const Eigen::VectorXd& beta_bar);

// Entrywise mean squared error between estimated and true per-cluster
// marginal covariance blocks V_i G V_i' + sigma2 I.
double mse_total_variance(const ClusteredDataset& dataset, Eigen::Index r_re,
                          const Eigen::MatrixXd& g_hat, double sigma2_hat,
                          const Eigen::MatrixXd& g_true, double sigma2_true);

struct SelectionMetrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double mcc = 0.0;
};

SelectionMetrics selection_metrics(const std::vector<Eigen::Index>& selected,
                                   const Eigen::VectorXi& gamma);

// Cluster-balanced fold plan: shuffled cluster ids dealt round-robin, every
// cluster wholly inside one fold.
struct CvPlan {
  int n_folds = 5;
  std::vector<int> fold_of_cluster;
  // With a time slope, each held-out cluster is split into an earlier-time
  // validation subfold and a later-time test subfold (2 test rows when the
  // cluster has >= 4 observations, 1 otherwise).  Without it, the whole
  // held-out fold both predicts the random effects and scores.
  bool time_split = false;
};

CvPlan make_cv_plan(const ClusteredDataset& dataset, int n_folds, std::uint64_t seed,
                    bool time_split);

// Rows of a held-out cluster assigned to the test subfold under time_split.
Eigen::Index test_rows_for_cluster(Eigen::Index n_obs);

std::vector<MetricsReport> cv_run(const ClusteredDataset& dataset, const CvPlan& plan,
                                  const EcmConfig& config, bool standardize_folds = true,
                                  const SimulationTruth* truth = nullptr);

}  // namespace lmmprobe
