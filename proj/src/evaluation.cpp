#include "lmmprobe/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "lmmprobe/errors.hpp"
#include "lmmprobe/prediction.hpp"
#include "lmmprobe/rng.hpp"
#include "lmmprobe/stats.hpp"

namespace lmmprobe {

namespace {

ClusteredDataset subset_clusters(const ClusteredDataset& ds, const std::vector<char>& keep) {
  std::vector<Cluster> clusters;
  for (Eigen::Index i = 0; i < ds.cluster_count(); ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    Cluster c;
    c.id = ds.spans[i].id;
    c.y = ds.y_of(i);
    c.x = ds.x_of(i);
    c.v = ds.v_of(i);
    clusters.push_back(std::move(c));
  }
  ClusteredDataset out = build_dataset(clusters);
  out.x_names = ds.x_names;
  out.v_names = ds.v_names;
  out.id_name = ds.id_name;
  out.response_name = ds.response_name;
  return out;
}

}  // namespace

double mspe(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() == 0 || y_true.size() != y_pred.size()) {
    throw DimensionError("mspe: inputs must be non-empty and equal length");
  }
  return (y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size());
}

double mad(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() == 0 || y_true.size() != y_pred.size()) {
    throw DimensionError("mad: inputs must be non-empty and equal length");
  }
  return median((y_true - y_pred).cwiseAbs());
}

double mse_fixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& true_effect,
                 const Eigen::VectorXd& beta_bar) {
  if (x.cols() != true_effect.size() || x.cols() != beta_bar.size()) {
    throw DimensionError("mse_fixed: coefficient lengths do not match x");
  }
  return (x * (true_effect - beta_bar)).squaredNorm() / static_cast<double>(x.rows());
}

double mse_total_variance(const ClusteredDataset& dataset, Eigen::Index r_re,
                          const Eigen::MatrixXd& g_hat, double sigma2_hat,
                          const Eigen::MatrixXd& g_true, double sigma2_true) {
  double total = 0.0;
  double cells = 0.0;
  for (Eigen::Index i = 0; i < dataset.cluster_count(); ++i) {
    const auto v_i = dataset.v_of(i).leftCols(r_re);
    Eigen::MatrixXd diff = v_i * (g_hat - g_true) * v_i.transpose();
    diff.diagonal().array() += sigma2_hat - sigma2_true;
    total += diff.squaredNorm();
    cells += static_cast<double>(diff.size());
  }
  return total / cells;
}

SelectionMetrics selection_metrics(const std::vector<Eigen::Index>& selected,
                                   const Eigen::VectorXi& gamma) {
  const Eigen::Index p = gamma.size();
  std::vector<char> picked(static_cast<std::size_t>(p), 0);
  for (Eigen::Index k : selected) {
    if (k < 0 || k >= p) throw DimensionError("selection_metrics: index out of range");
    picked[static_cast<std::size_t>(k)] = 1;
  }
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (Eigen::Index k = 0; k < p; ++k) {
    const bool truth = gamma[k] != 0;
    const bool chosen = picked[static_cast<std::size_t>(k)] != 0;
    if (truth && chosen) ++tp;
    else if (!truth && chosen) ++fp;
    else if (truth) ++fn;
    else ++tn;
  }
  SelectionMetrics out;
  out.sensitivity = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
  out.specificity = (tn + fp) > 0 ? tn / (tn + fp) : 0.0;
  const double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  out.mcc = denom > 0.0 ? (tp * tn - fp * fn) / denom : 0.0;
  return out;
}

CvPlan make_cv_plan(const ClusteredDataset& dataset, int n_folds, std::uint64_t seed,
                    bool time_split) {
  if (n_folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  const Eigen::Index n = dataset.cluster_count();
  if (n < n_folds) throw ConfigError("fewer clusters than folds");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  CvPlan plan;
  plan.n_folds = n_folds;
  plan.time_split = time_split;
  plan.fold_of_cluster.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.fold_of_cluster[static_cast<std::size_t>(order[pos])] =
        static_cast<int>(pos % static_cast<std::size_t>(n_folds));
  }
  return plan;
}

Eigen::Index test_rows_for_cluster(Eigen::Index n_obs) { return n_obs >= 4 ? 2 : 1; }

std::vector<MetricsReport> cv_run(const ClusteredDataset& dataset, const CvPlan& plan,
                                  const EcmConfig& config, bool standardize_folds,
                                  const SimulationTruth* truth) {
  const Eigen::Index n_clusters = dataset.cluster_count();
  if (static_cast<Eigen::Index>(plan.fold_of_cluster.size()) != n_clusters) {
    throw DimensionError("cv plan does not match the dataset");
  }
  std::vector<MetricsReport> reports;
  reports.reserve(static_cast<std::size_t>(plan.n_folds));
  for (int fold = 0; fold < plan.n_folds; ++fold) {
    MetricsReport report;
    report.fold = fold;
    std::vector<char> in_train(static_cast<std::size_t>(n_clusters), 0);
    std::vector<Eigen::Index> heldout;
    for (Eigen::Index i = 0; i < n_clusters; ++i) {
      if (plan.fold_of_cluster[static_cast<std::size_t>(i)] == fold) {
        heldout.push_back(i);
      } else {
        in_train[static_cast<std::size_t>(i)] = 1;
      }
    }
    if (heldout.empty()) {
      report.skipped = true;
      reports.push_back(report);
      continue;
    }

    ClusteredDataset train = subset_clusters(dataset, in_train);
    if (standardize_folds) train = standardize(train);

    const auto start = std::chrono::steady_clock::now();
    const FitResult fitted = fit(train, config);
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.iterations = fitted.iterations;
    report.converged = fitted.converged;
    report.n_selected = static_cast<long>(fitted.selected.size());

    // Assemble the held-out prediction request per the split rule.
    PredictionRequest request;
    ValidationBlock validation;
    std::vector<Eigen::VectorXd> y_rows;
    std::vector<Eigen::Index> test_row_ids;
    Eigen::Index n_pred = 0, n_val = 0;
    for (Eigen::Index i : heldout) {
      const Eigen::Index n_i = dataset.spans[i].size;
      const Eigen::Index n_test = plan.time_split ? test_rows_for_cluster(n_i) : n_i;
      const Eigen::Index n_validation = plan.time_split ? n_i - n_test : n_i;
      n_pred += n_test;
      n_val += n_validation;
    }
    if (n_pred == 0) {
      report.skipped = true;
      reports.push_back(report);
      continue;
    }
    request.x.resize(n_pred, dataset.predictor_count());
    request.v.resize(n_pred, dataset.nonsparse_count());
    validation.x.resize(n_val, dataset.predictor_count());
    validation.v.resize(n_val, dataset.nonsparse_count());
    validation.y.resize(n_val);
    Eigen::VectorXd y_test(n_pred);
    Eigen::Index at_pred = 0, at_val = 0;
    for (Eigen::Index i : heldout) {
      const auto& span = dataset.spans[i];
      const Eigen::Index n_i = span.size;
      const Eigen::Index n_test = plan.time_split ? test_rows_for_cluster(n_i) : n_i;
      const Eigen::Index n_validation = plan.time_split ? n_i - n_test : n_i;
      // Earlier rows (earlier times) feed the random-effect prediction.
      for (Eigen::Index j = 0; j < n_validation; ++j) {
        validation.x.row(at_val) = dataset.x.row(span.start + j);
        validation.v.row(at_val) = dataset.v.row(span.start + j);
        validation.y[at_val] = dataset.y[span.start + j];
        validation.cluster_ids.push_back(span.id);
        ++at_val;
      }
      const Eigen::Index test_begin = plan.time_split ? n_i - n_test : 0;
      for (Eigen::Index j = test_begin; j < n_i; ++j) {
        request.x.row(at_pred) = dataset.x.row(span.start + j);
        request.v.row(at_pred) = dataset.v.row(span.start + j);
        request.cluster_ids.push_back(span.id);
        y_test[at_pred] = dataset.y[span.start + j];
        ++at_pred;
      }
    }
    if (n_val > 0) request.validation = std::move(validation);

    const PredictionResult pred = predict(fitted, request);
    report.mspe = mspe(y_test, pred.y_hat_full);
    report.mad = mad(y_test, pred.y_hat_full);

    if (truth) {
      const SelectionMetrics sel = selection_metrics(fitted.selected, truth->gamma);
      report.sensitivity = sel.sensitivity;
      report.specificity = sel.specificity;
      report.mcc = sel.mcc;
      const Eigen::VectorXd true_effect =
          truth->beta.cwiseProduct(truth->gamma.cast<double>());
      const CoefficientReport coef = coefficients(fitted, CoefficientScale::kOriginal);
      const Eigen::VectorXd sparse_pred =
          (request.x * coef.beta_bar).array() + coef.intercept_adjustment;
      const Eigen::VectorXd sparse_true = request.x * true_effect;
      report.mse_fixed =
          (sparse_true - sparse_pred).squaredNorm() / static_cast<double>(n_pred);
      report.mse_total_variance =
          mse_total_variance(train, fitted.state.r_re, fitted.state.g, fitted.state.sigma2,
                             truth->g, truth->sigma2);
    }
    reports.push_back(report);
  }
  return reports;
}

}  // namespace lmmprobe
