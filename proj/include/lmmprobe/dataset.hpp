#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lmmprobe {

// One cluster of longitudinal observations: response y, sparse predictors x,
// and the non-sparse design v whose first column is the intercept.
struct Cluster {
  std::string id;
  Eigen::VectorXd y;   // n_i
  Eigen::MatrixXd x;   // n_i x p
  Eigen::MatrixXd v;   // n_i x r, first column all ones
};

// Per-column centering/scaling applied to the sparse predictors.
struct StandardizationRecord {
  Eigen::VectorXd means;
  Eigen::VectorXd scales;  // sample standard deviations, strictly positive
};

struct ClusterSpan {
  std::string id;
  Eigen::Index start = 0;
  Eigen::Index size = 0;
};

// Clustered dataset stored in stacked form.  Rows keep input order: clusters
// in first-appearance order, observations in file order within each cluster.
// Immutable after construction; safe to share read-only across workers.
class ClusteredDataset {
 public:
  Eigen::VectorXd y;  // M
  Eigen::MatrixXd x;  // M x p
  Eigen::MatrixXd v;  // M x r
  std::vector<ClusterSpan> spans;
  std::vector<std::string> x_names;
  std::vector<std::string> v_names;  // v_names[0] == "(intercept)"
  std::string id_name = "cluster";
  std::string response_name = "y";
  std::optional<StandardizationRecord> standardization;

  Eigen::Index total_observations() const { return y.size(); }
  Eigen::Index cluster_count() const { return static_cast<Eigen::Index>(spans.size()); }
  Eigen::Index predictor_count() const { return x.cols(); }
  Eigen::Index nonsparse_count() const { return v.cols(); }

  auto y_of(Eigen::Index i) const { return y.segment(spans[i].start, spans[i].size); }
  auto x_of(Eigen::Index i) const { return x.middleRows(spans[i].start, spans[i].size); }
  auto v_of(Eigen::Index i) const { return v.middleRows(spans[i].start, spans[i].size); }
};

// Column-role mapping for CSV ingestion.  Columns not named here are treated
// as sparse predictors.  The intercept is appended automatically, so
// nonsparse_columns lists only the r-1 extra non-sparse columns.
struct CsvSchema {
  std::string id_column = "cluster";
  std::string response_column = "y";
  std::vector<std::string> nonsparse_columns;
};

ClusteredDataset build_dataset(const std::vector<Cluster>& clusters);

ClusteredDataset load_dataset(const std::string& path, const CsvSchema& schema);
void save_dataset(const std::string& path, const ClusteredDataset& dataset);

// Centers and scales every sparse column to global mean 0, sample sd 1.
// Records the transform so coefficients can be mapped back.  Errors on
// constant columns and on datasets that already carry a record.
ClusteredDataset standardize(const ClusteredDataset& dataset);

struct Diagnostic {
  enum class Kind { kCollinearWithV, kRankDeficientV, kEmptyCluster };
  Kind kind;
  Eigen::Index index = -1;  // predictor index for collinearity, cluster index otherwise
  bool fatal = false;
  std::string message;
};

// Reports sparse columns perfectly collinear with V (absolute multiple
// correlation >= 1 - 1e-10), empty clusters, and rank deficiency of the
// stacked V.  Diagnostics only; fitting refuses datasets with fatal entries.
std::vector<Diagnostic> validate(const ClusteredDataset& dataset);

}  // namespace lmmprobe
