#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lmmprobe/ecm.hpp"

namespace lmmprobe {

// Rows used to predict random effects for clusters appearing in the request.
struct ValidationBlock {
  Eigen::MatrixXd x;
  Eigen::MatrixXd v;
  Eigen::VectorXd y;
  std::vector<std::string> cluster_ids;
};

struct PredictionRequest {
  Eigen::MatrixXd x;  // rows to predict, original (unstandardized) scale
  Eigen::MatrixXd v;  // includes the intercept column
  std::vector<std::string> cluster_ids;
  std::optional<ValidationBlock> validation;
};

struct PredictionResult {
  Eigen::VectorXd y_hat_full;   // fixed effects plus predicted random effects
  Eigen::VectorXd y_hat_fixed;  // fixed effects only
  Eigen::MatrixXd b_hat;        // one row per distinct request cluster
  std::vector<std::string> b_cluster_ids;
};

// y_full = V omega0 + alpha0 * X(p .* beta) + tau0 * V_re b;  b is predicted
// from the validation rows of the same cluster when available and is the
// prior mean 0 otherwise.
PredictionResult predict(const FitResult& fit, const PredictionRequest& request);

struct CoefficientReport {
  Eigen::VectorXd beta_bar;
  // Added to the fitted intercept when mapping standardized coefficients back
  // to the original predictor scale.
  double intercept_adjustment = 0.0;
};

enum class CoefficientScale { kStandardized, kOriginal };

CoefficientReport coefficients(const FitResult& fit, CoefficientScale scale);

}  // namespace lmmprobe
