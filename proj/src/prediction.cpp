#include "lmmprobe/prediction.hpp"

#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "lmmprobe/errors.hpp"

namespace lmmprobe {

namespace {

Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& x,
                                      const std::optional<StandardizationRecord>& record) {
  if (!record) return x;
  if (x.cols() != record->means.size()) {
    throw DimensionError("prediction rows do not match the standardization record");
  }
  Eigen::MatrixXd out = x;
  out.rowwise() -= record->means.transpose();
  out.array().rowwise() /= record->scales.transpose().array();
  return out;
}

}  // namespace

PredictionResult predict(const FitResult& fit, const PredictionRequest& request) {
  const EcmState& state = fit.state;
  const Eigen::Index p = state.beta.size();
  const Eigen::Index ra = state.omega0.size();
  const Eigen::Index r_re = state.r_re;
  if (request.x.cols() != p) {
    throw DimensionError("prediction request has " + std::to_string(request.x.cols()) +
                         " predictors, fit has " + std::to_string(p));
  }
  if (request.v.cols() != ra) {
    throw DimensionError("prediction request has " + std::to_string(request.v.cols()) +
                         " non-sparse columns, fit has " + std::to_string(ra));
  }
  if (static_cast<Eigen::Index>(request.cluster_ids.size()) != request.x.rows() ||
      request.v.rows() != request.x.rows()) {
    throw DimensionError("prediction request rows and cluster ids disagree");
  }

  const Eigen::VectorXd effect = state.probs.cwiseProduct(state.beta);
  const Eigen::MatrixXd x_scaled = apply_standardization(request.x, fit.standardization);
  const Eigen::VectorXd w_new = x_scaled * effect;

  // Random effects per cluster from validation rows, prior mean otherwise.
  std::unordered_map<std::string, Eigen::VectorXd> b_of;
  if (request.validation) {
    const ValidationBlock& val = *request.validation;
    if (val.x.cols() != p || val.v.cols() != ra ||
        static_cast<Eigen::Index>(val.cluster_ids.size()) != val.x.rows() ||
        val.y.size() != val.x.rows()) {
      throw DimensionError("validation block dimensions disagree with the fit");
    }
    const Eigen::MatrixXd val_x = apply_standardization(val.x, fit.standardization);
    const Eigen::VectorXd val_w = val_x * effect;
    const Eigen::VectorXd residual =
        val.y - val.v * state.omega0 - state.alpha0 * val_w;
    std::unordered_map<std::string, std::vector<Eigen::Index>> rows_of;
    for (Eigen::Index j = 0; j < val.x.rows(); ++j) rows_of[val.cluster_ids[j]].push_back(j);
    Eigen::FullPivLU<Eigen::MatrixXd> g_lu(state.g);
    if (!g_lu.isInvertible()) {
      throw NumericalError("fitted G is singular; cannot predict random effects");
    }
    const Eigen::MatrixXd g_inv = g_lu.inverse();
    for (const auto& [id, rows] : rows_of) {
      Eigen::MatrixXd v_val(rows.size(), r_re);
      Eigen::VectorXd res_val(rows.size());
      for (std::size_t j = 0; j < rows.size(); ++j) {
        v_val.row(static_cast<Eigen::Index>(j)) = val.v.row(rows[j]).head(r_re);
        res_val[static_cast<Eigen::Index>(j)] = residual[rows[j]];
      }
      const Eigen::MatrixXd psi = v_val.transpose() * v_val + state.sigma2 * g_inv;
      b_of[id] = psi.llt().solve(v_val.transpose() * res_val);
    }
  }

  PredictionResult result;
  const Eigen::Index n = request.x.rows();
  result.y_hat_fixed = request.v * state.omega0 + state.alpha0 * w_new;
  result.y_hat_full = result.y_hat_fixed;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto it = b_of.find(request.cluster_ids[j]);
    if (it == b_of.end()) continue;
    const double vb = request.v.row(j).head(r_re).dot(it->second);
    result.y_hat_full[j] += state.tau0 * vb;
  }

  // Report one b row per distinct request cluster, in first-appearance order.
  std::unordered_map<std::string, bool> seen;
  for (const auto& id : request.cluster_ids) {
    if (seen.emplace(id, true).second) result.b_cluster_ids.push_back(id);
  }
  result.b_hat = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(result.b_cluster_ids.size()), r_re);
  for (std::size_t i = 0; i < result.b_cluster_ids.size(); ++i) {
    const auto it = b_of.find(result.b_cluster_ids[i]);
    if (it != b_of.end()) result.b_hat.row(static_cast<Eigen::Index>(i)) = it->second.transpose();
  }
  return result;
}

CoefficientReport coefficients(const FitResult& fit, CoefficientScale scale) {
  CoefficientReport report;
  report.beta_bar = fit.beta_bar;
  if (scale == CoefficientScale::kStandardized) return report;
  if (!fit.standardization) {
    if (fit.standardized_fit) {
      throw ConfigError("original-scale coefficients requested but the standardization "
                        "record is missing");
    }
    return report;  // fit ran on the original scale already
  }
  const StandardizationRecord& rec = *fit.standardization;
  report.beta_bar = fit.beta_bar.cwiseQuotient(rec.scales);
  report.intercept_adjustment = -fit.beta_bar.cwiseQuotient(rec.scales).dot(rec.means);
  return report;
}

}  // namespace lmmprobe
