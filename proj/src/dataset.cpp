#include "lmmprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/QR>

#include "lmmprobe/errors.hpp"
#include "lmmprobe/stats.hpp"

namespace lmmprobe {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_number(const std::string& cell, Eigen::Index row, const std::string& column) {
  if (cell.empty()) {
    throw IngestionError("missing value at row " + std::to_string(row) + ", column '" + column +
                         "' (missing values are not supported)");
  }
  char* end = nullptr;
  const double value = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0' || std::isnan(value)) {
    throw IngestionError("non-numeric value '" + cell + "' at row " + std::to_string(row) +
                         ", column '" + column + "'");
  }
  return value;
}

void format_double(std::string& out, double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  out += buf;
}

}  // namespace

ClusteredDataset build_dataset(const std::vector<Cluster>& clusters) {
  if (clusters.empty()) throw DataError("dataset has no clusters");
  const Eigen::Index p = clusters.front().x.cols();
  const Eigen::Index r = clusters.front().v.cols();
  Eigen::Index total = 0;
  for (const auto& c : clusters) {
    if (c.y.size() < 1) throw DataError("cluster '" + c.id + "' has no observations");
    if (c.x.rows() != c.y.size() || c.v.rows() != c.y.size()) {
      throw DimensionError("cluster '" + c.id + "': row counts of y, x, v disagree");
    }
    if (c.x.cols() != p || c.v.cols() != r) {
      throw DimensionError("cluster '" + c.id + "': predictor counts differ between clusters");
    }
    if (r < 1 || !(c.v.col(0).array() == 1.0).all()) {
      throw DataError("cluster '" + c.id + "': first column of v must be identically 1");
    }
    total += c.y.size();
  }
  ClusteredDataset ds;
  ds.y.resize(total);
  ds.x.resize(total, p);
  ds.v.resize(total, r);
  ds.spans.reserve(clusters.size());
  Eigen::Index at = 0;
  for (const auto& c : clusters) {
    const Eigen::Index n = c.y.size();
    ds.y.segment(at, n) = c.y;
    ds.x.middleRows(at, n) = c.x;
    ds.v.middleRows(at, n) = c.v;
    ds.spans.push_back({c.id, at, n});
    at += n;
  }
  ds.x_names.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) ds.x_names[k] = "x" + std::to_string(k + 1);
  ds.v_names.resize(r);
  ds.v_names[0] = "(intercept)";
  for (Eigen::Index j = 1; j < r; ++j) ds.v_names[j] = "v" + std::to_string(j);
  return ds;
}

ClusteredDataset load_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("file '" + path + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);
  {
    std::unordered_set<std::string> seen;
    for (const auto& name : header) {
      if (!seen.insert(name).second) {
        throw SchemaError("duplicate column name '" + name + "' in '" + path + "'");
      }
    }
  }
  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column_of(schema.id_column);
  const std::size_t y_col = column_of(schema.response_column);
  std::vector<std::size_t> v_cols;
  for (const auto& name : schema.nonsparse_columns) v_cols.push_back(column_of(name));
  std::vector<std::size_t> x_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == id_col || c == y_col) continue;
    if (std::find(v_cols.begin(), v_cols.end(), c) != v_cols.end()) continue;
    x_cols.push_back(c);
  }

  struct RawRow {
    std::string id;
    double y;
    std::vector<double> v;
    std::vector<double> x;
  };
  std::vector<RawRow> rows;
  Eigen::Index row_index = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_index;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw IngestionError("row " + std::to_string(row_index) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(header.size()));
    }
    RawRow row;
    row.id = cells[id_col];
    if (row.id.empty()) {
      throw IngestionError("missing cluster id at row " + std::to_string(row_index));
    }
    row.y = parse_number(cells[y_col], row_index, header[y_col]);
    row.v.reserve(v_cols.size());
    for (std::size_t c : v_cols) row.v.push_back(parse_number(cells[c], row_index, header[c]));
    row.x.reserve(x_cols.size());
    for (std::size_t c : x_cols) row.x.push_back(parse_number(cells[c], row_index, header[c]));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IngestionError("file '" + path + "' has no data rows");

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_cluster;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto [it, inserted] = by_cluster.try_emplace(rows[i].id);
    if (inserted) order.push_back(rows[i].id);
    it->second.push_back(i);
  }
  if (order.size() < 2) {
    throw DataError("dataset must contain at least 2 clusters, found " +
                    std::to_string(order.size()));
  }

  const Eigen::Index p = static_cast<Eigen::Index>(x_cols.size());
  const Eigen::Index r = static_cast<Eigen::Index>(v_cols.size()) + 1;
  std::vector<Cluster> clusters;
  clusters.reserve(order.size());
  for (const auto& id : order) {
    const auto& members = by_cluster[id];
    Cluster c;
    c.id = id;
    const Eigen::Index n = static_cast<Eigen::Index>(members.size());
    c.y.resize(n);
    c.x.resize(n, p);
    c.v.resize(n, r);
    for (Eigen::Index j = 0; j < n; ++j) {
      const RawRow& row = rows[members[static_cast<std::size_t>(j)]];
      c.y[j] = row.y;
      c.v(j, 0) = 1.0;
      for (Eigen::Index a = 1; a < r; ++a) c.v(j, a) = row.v[static_cast<std::size_t>(a - 1)];
      for (Eigen::Index k = 0; k < p; ++k) c.x(j, k) = row.x[static_cast<std::size_t>(k)];
    }
    clusters.push_back(std::move(c));
  }
  ClusteredDataset ds = build_dataset(clusters);
  ds.id_name = schema.id_column;
  ds.response_name = schema.response_column;
  for (Eigen::Index k = 0; k < p; ++k) ds.x_names[k] = header[x_cols[static_cast<std::size_t>(k)]];
  for (std::size_t a = 0; a < v_cols.size(); ++a) ds.v_names[a + 1] = header[v_cols[a]];
  return ds;
}

void save_dataset(const std::string& path, const ClusteredDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write file '" + path + "'");
  std::string buffer;
  buffer += dataset.id_name;
  buffer += ',';
  buffer += dataset.response_name;
  for (Eigen::Index a = 1; a < dataset.nonsparse_count(); ++a) {
    buffer += ',';
    buffer += dataset.v_names[a];
  }
  for (const auto& name : dataset.x_names) {
    buffer += ',';
    buffer += name;
  }
  buffer += '\n';
  for (const auto& span : dataset.spans) {
    for (Eigen::Index j = 0; j < span.size; ++j) {
      const Eigen::Index row = span.start + j;
      buffer += span.id;
      buffer += ',';
      format_double(buffer, dataset.y[row]);
      for (Eigen::Index a = 1; a < dataset.nonsparse_count(); ++a) {
        buffer += ',';
        format_double(buffer, dataset.v(row, a));
      }
      for (Eigen::Index k = 0; k < dataset.predictor_count(); ++k) {
        buffer += ',';
        format_double(buffer, dataset.x(row, k));
      }
      buffer += '\n';
    }
  }
  out << buffer;
}

ClusteredDataset standardize(const ClusteredDataset& dataset) {
  if (dataset.standardization) {
    throw ConfigError("dataset is already standardized");
  }
  const Eigen::Index p = dataset.predictor_count();
  ClusteredDataset out = dataset;
  StandardizationRecord record;
  record.means.resize(p);
  record.scales.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double mean = dataset.x.col(k).mean();
    const double sd = sample_sd(dataset.x.col(k));
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      throw DataError("constant sparse predictor column '" + dataset.x_names[k] +
                      "' cannot be standardized");
    }
    record.means[k] = mean;
    record.scales[k] = sd;
    out.x.col(k) = (dataset.x.col(k).array() - mean) / sd;
  }
  out.standardization = std::move(record);
  return out;
}

std::vector<Diagnostic> validate(const ClusteredDataset& dataset) {
  std::vector<Diagnostic> diags;
  for (Eigen::Index i = 0; i < dataset.cluster_count(); ++i) {
    if (dataset.spans[i].size < 1) {
      diags.push_back({Diagnostic::Kind::kEmptyCluster, i, true,
                       "cluster '" + dataset.spans[i].id + "' has no observations"});
    }
  }
  const Eigen::Index r = dataset.nonsparse_count();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> v_qr(dataset.v);
  v_qr.setThreshold(1e-10);
  if (v_qr.rank() < r) {
    diags.push_back({Diagnostic::Kind::kRankDeficientV, -1, true,
                     "stacked V is rank deficient (rank " + std::to_string(v_qr.rank()) +
                         " of " + std::to_string(r) + ")"});
    return diags;  // collinearity scores are meaningless against a deficient V
  }
  // Uncentered multiple correlation of each sparse column with the span of V.
  const Eigen::MatrixXd q = v_qr.householderQ() * Eigen::MatrixXd::Identity(dataset.v.rows(), r);
  for (Eigen::Index k = 0; k < dataset.predictor_count(); ++k) {
    const double norm2 = dataset.x.col(k).squaredNorm();
    if (norm2 == 0.0) {
      diags.push_back({Diagnostic::Kind::kCollinearWithV, k, false,
                       "predictor '" + dataset.x_names[k] + "' is identically zero"});
      continue;
    }
    const double projected2 = (q.transpose() * dataset.x.col(k)).squaredNorm();
    const double correlation = std::sqrt(std::min(1.0, projected2 / norm2));
    if (correlation >= 1.0 - 1e-10) {
      diags.push_back({Diagnostic::Kind::kCollinearWithV, k, false,
                       "predictor '" + dataset.x_names[k] +
                           "' is perfectly collinear with the non-sparse design"});
    }
  }
  return diags;
}

}  // namespace lmmprobe
