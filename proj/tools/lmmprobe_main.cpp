#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lmmprobe/benchmark.hpp"
#include "lmmprobe/dataset.hpp"
#include "lmmprobe/ecm.hpp"
#include "lmmprobe/errors.hpp"
#include "lmmprobe/evaluation.hpp"
#include "lmmprobe/prediction.hpp"
#include "lmmprobe/simulation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string format_g17(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct CommonOptions {
  std::string out_dir;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct SchemaOptions {
  std::string id_column = "cluster";
  std::string response_column = "y";
  std::string v_columns;  // comma separated

  lmmprobe::CsvSchema schema() const {
    lmmprobe::CsvSchema s;
    s.id_column = id_column;
    s.response_column = response_column;
    s.nonsparse_columns = split_list(v_columns);
    return s;
  }
};

struct EngineOptions {
  long max_iterations = 1000;
  double convergence_quantile = 0.1;
  bool convergence_lower_tail = false;
  double storey_lambda = 0.1;
  int adjust_covariates = 0;
  bool no_standardize = false;

  lmmprobe::EcmConfig config(const CommonOptions& common) const {
    lmmprobe::EcmConfig c;
    c.max_iterations = max_iterations;
    c.convergence_quantile = convergence_quantile;
    c.convergence_lower_tail = convergence_lower_tail;
    c.storey_lambda = storey_lambda;
    c.adjust_covariates = adjust_covariates;
    c.seed = common.seed;
    c.workers = common.workers;
    return c;
  }
};

void add_common(CLI::App* cmd, CommonOptions& common, bool out_required = true) {
  auto* out = cmd->add_option("--out", common.out_dir, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", common.seed, "random seed");
  cmd->add_option("--workers", common.workers, "worker threads (0 = auto)")
      ->envname("LMMPROBE_WORKERS");
}

void add_schema(CLI::App* cmd, SchemaOptions& schema) {
  cmd->add_option("--id-col", schema.id_column, "cluster id column name");
  cmd->add_option("--y-col", schema.response_column, "response column name");
  cmd->add_option("--v-cols", schema.v_columns,
                  "comma-separated non-sparse columns (intercept is implicit)");
}

void add_engine(CLI::App* cmd, EngineOptions& engine) {
  cmd->add_option("--max-iter", engine.max_iterations, "iteration cap");
  cmd->add_option("--convergence-quantile", engine.convergence_quantile,
                  "chi-square(1) quantile for the stopping rule");
  cmd->add_flag("--convergence-lower-tail", engine.convergence_lower_tail,
                "read the quantile as lower-tail probability");
  cmd->add_option("--storey-lambda", engine.storey_lambda, "null-proportion tail cutoff");
  cmd->add_option("--adjust", engine.adjust_covariates,
                  "trailing v columns used as fixed-effect adjustments only");
  cmd->add_flag("--no-standardize", engine.no_standardize,
                "skip standardization of the sparse predictors");
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw lmmprobe::ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

void echo_config(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string text;
  for (const auto& [key, value] : kv) text += key + "=" + value + "\n";
  write_text(dir / "effective_config.txt", text);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

// ---------------------------------------------------------------- fit

void write_fit_artifacts(const fs::path& dir, const lmmprobe::ClusteredDataset& ds,
                         const lmmprobe::FitResult& result) {
  const lmmprobe::EcmState& state = result.state;
  {
    std::string csv = "k,beta_tilde,s_tilde,p_tilde,beta_bar\n";
    for (Eigen::Index k = 0; k < state.beta.size(); ++k) {
      csv += std::to_string(k + 1) + "," + format_g17(state.beta[k]) + "," +
             format_g17(std::sqrt(std::max(0.0, state.s2[k]))) + "," +
             format_g17(state.probs[k]) + "," + format_g17(result.beta_bar[k]) + "\n";
    }
    write_text(dir / "coefficients.csv", csv);
  }
  {
    json j;
    j["sigma2"] = state.sigma2;
    j["G"] = matrix_to_json(state.g);
    j["omega0"] = vector_to_json(state.omega0);
    j["alpha0"] = state.alpha0;
    j["tau0"] = state.tau0;
    j["r_re"] = state.r_re;
    j["converged"] = result.converged;
    j["all_null"] = result.all_null;
    j["iterations"] = result.iterations;
    j["pi0"] = state.pi0;
    j["n_selected"] = static_cast<long>(result.selected.size());
    j["variance_floor_events"] = state.counters.var_floor;
    j["ridge_retries"] = state.counters.ridge_retries;
    write_text(dir / "variance.json", j.dump(2) + "\n");
  }
  {
    std::string csv = "t,cc,loglik\n";
    for (std::size_t i = 0; i < state.cc_trace.size(); ++i) {
      csv += std::to_string(i + 1) + "," + format_g17(state.cc_trace[i]) + "," +
             format_g17(state.loglik_trace[i + 1]) + "\n";
    }
    write_text(dir / "trace.csv", csv);
  }
  if (result.standardization) {
    std::string csv = "k,name,mean,scale\n";
    for (Eigen::Index k = 0; k < result.standardization->means.size(); ++k) {
      csv += std::to_string(k + 1) + "," + ds.x_names[k] + "," +
             format_g17(result.standardization->means[k]) + "," +
             format_g17(result.standardization->scales[k]) + "\n";
    }
    write_text(dir / "standardization.csv", csv);
  }
}

int cmd_fit(const std::string& data_path, const SchemaOptions& schema_opts,
            const EngineOptions& engine, const CommonOptions& common) {
  lmmprobe::ClusteredDataset ds = lmmprobe::load_dataset(data_path, schema_opts.schema());
  if (!engine.no_standardize) ds = lmmprobe::standardize(ds);
  const lmmprobe::EcmConfig config = engine.config(common);
  const lmmprobe::FitResult result = lmmprobe::fit(ds, config);
  fs::create_directories(common.out_dir);
  write_fit_artifacts(common.out_dir, ds, result);
  echo_config(common.out_dir,
              {{"command", "fit"},
               {"data", data_path},
               {"id_col", schema_opts.id_column},
               {"y_col", schema_opts.response_column},
               {"v_cols", schema_opts.v_columns},
               {"standardize", engine.no_standardize ? "false" : "true"},
               {"max_iter", std::to_string(engine.max_iterations)},
               {"convergence_quantile", format_g17(engine.convergence_quantile)},
               {"convergence_lower_tail", engine.convergence_lower_tail ? "true" : "false"},
               {"storey_lambda", format_g17(engine.storey_lambda)},
               {"adjust", std::to_string(engine.adjust_covariates)},
               {"seed", std::to_string(common.seed)},
               {"workers", std::to_string(common.workers)}});
  if (!result.converged) {
    std::cerr << "warning: not converged within " << engine.max_iterations
              << " iterations; artifacts written\n";
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictionRows {
  Eigen::MatrixXd x;
  Eigen::MatrixXd v;
  Eigen::VectorXd y;  // zero when the file has no response column
  bool has_y = false;
  std::vector<std::string> cluster_ids;
};

PredictionRows load_prediction_rows(const std::string& path, const lmmprobe::CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw lmmprobe::IngestionError("cannot open file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw lmmprobe::IngestionError("file '" + path + "' is empty");
  auto cells_of = [](const std::string& text) {
    std::vector<std::string> cells;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      cells.push_back(cell);
    }
    return cells;
  };
  const std::vector<std::string> header = cells_of(line);
  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    return std::nullopt;
  };
  const auto id_col = find_col(schema.id_column);
  if (!id_col) throw lmmprobe::SchemaError("column '" + schema.id_column + "' not found");
  const auto y_col = find_col(schema.response_column);
  std::vector<std::size_t> v_cols;
  for (const auto& name : schema.nonsparse_columns) {
    const auto col = find_col(name);
    if (!col) throw lmmprobe::SchemaError("column '" + name + "' not found");
    v_cols.push_back(*col);
  }
  std::vector<std::size_t> x_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == *id_col || (y_col && c == *y_col)) continue;
    bool is_v = false;
    for (std::size_t vc : v_cols) is_v |= (vc == c);
    if (!is_v) x_cols.push_back(c);
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(cells_of(line));
  }
  PredictionRows out;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  out.v.resize(n, static_cast<Eigen::Index>(v_cols.size()) + 1);
  out.y = Eigen::VectorXd::Zero(n);
  out.has_y = y_col.has_value();
  auto parse = [&](const std::string& cell, Eigen::Index row, std::size_t col) {
    char* end = nullptr;
    const double value = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end == cell.c_str() || *end != '\0') {
      throw lmmprobe::IngestionError("non-numeric value at row " + std::to_string(row + 1) +
                                     ", column '" + header[col] + "'");
    }
    return value;
  };
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& cells = rows[static_cast<std::size_t>(j)];
    if (cells.size() != header.size()) {
      throw lmmprobe::IngestionError("row " + std::to_string(j + 1) + " has the wrong cell count");
    }
    out.cluster_ids.push_back(cells[*id_col]);
    if (y_col) out.y[j] = parse(cells[*y_col], j, *y_col);
    out.v(j, 0) = 1.0;
    for (std::size_t a = 0; a < v_cols.size(); ++a) {
      out.v(j, static_cast<Eigen::Index>(a) + 1) = parse(cells[v_cols[a]], j, v_cols[a]);
    }
    for (std::size_t k = 0; k < x_cols.size(); ++k) {
      out.x(j, static_cast<Eigen::Index>(k)) = parse(cells[x_cols[k]], j, x_cols[k]);
    }
  }
  return out;
}

lmmprobe::FitResult load_fit_artifacts(const fs::path& model_dir) {
  lmmprobe::FitResult result;
  {
    std::ifstream in(model_dir / "variance.json");
    if (!in) {
      throw lmmprobe::ConfigError("cannot open '" + (model_dir / "variance.json").string() + "'");
    }
    json j;
    in >> j;
    result.state.sigma2 = j.at("sigma2").get<double>();
    const auto& g_rows = j.at("G");
    const Eigen::Index r = static_cast<Eigen::Index>(g_rows.size());
    result.state.g.resize(r, r);
    for (Eigen::Index a = 0; a < r; ++a) {
      for (Eigen::Index b = 0; b < r; ++b) result.state.g(a, b) = g_rows[a][b].get<double>();
    }
    const auto& omega = j.at("omega0");
    result.state.omega0.resize(static_cast<Eigen::Index>(omega.size()));
    for (Eigen::Index a = 0; a < result.state.omega0.size(); ++a) {
      result.state.omega0[a] = omega[a].get<double>();
    }
    result.state.alpha0 = j.at("alpha0").get<double>();
    result.state.tau0 = j.at("tau0").get<double>();
    result.state.r_re = j.at("r_re").get<Eigen::Index>();
    result.converged = j.at("converged").get<bool>();
  }
  {
    std::ifstream in(model_dir / "coefficients.csv");
    if (!in) throw lmmprobe::ConfigError("cannot open coefficients.csv");
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> beta, s, p, bar;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      beta.push_back(std::stod(cells[1]));
      s.push_back(std::stod(cells[2]));
      p.push_back(std::stod(cells[3]));
      bar.push_back(std::stod(cells[4]));
    }
    const Eigen::Index n = static_cast<Eigen::Index>(beta.size());
    result.state.beta.resize(n);
    result.state.s2.resize(n);
    result.state.probs.resize(n);
    result.beta_bar.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      result.state.beta[k] = beta[static_cast<std::size_t>(k)];
      result.state.s2[k] = s[static_cast<std::size_t>(k)] * s[static_cast<std::size_t>(k)];
      result.state.probs[k] = p[static_cast<std::size_t>(k)];
      result.beta_bar[k] = bar[static_cast<std::size_t>(k)];
      if (result.state.probs[k] > 0.5) result.selected.push_back(k);
    }
  }
  const fs::path std_path = model_dir / "standardization.csv";
  if (fs::exists(std_path)) {
    std::ifstream in(std_path);
    std::string line;
    std::getline(in, line);
    std::vector<double> means, scales;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      means.push_back(std::stod(cells[2]));
      scales.push_back(std::stod(cells[3]));
    }
    lmmprobe::StandardizationRecord rec;
    rec.means = Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
    rec.scales =
        Eigen::Map<Eigen::VectorXd>(scales.data(), static_cast<Eigen::Index>(scales.size()));
    result.standardization = rec;
    result.standardized_fit = true;
  }
  return result;
}

int cmd_predict(const std::string& model_dir, const std::string& data_path,
                const std::string& validation_path, const SchemaOptions& schema_opts,
                const CommonOptions& common) {
  const lmmprobe::FitResult fit_result = load_fit_artifacts(model_dir);
  const lmmprobe::CsvSchema schema = schema_opts.schema();
  const PredictionRows rows = load_prediction_rows(data_path, schema);
  lmmprobe::PredictionRequest request;
  request.x = rows.x;
  request.v = rows.v;
  request.cluster_ids = rows.cluster_ids;
  if (!validation_path.empty()) {
    const PredictionRows val_rows = load_prediction_rows(validation_path, schema);
    if (!val_rows.has_y) {
      throw lmmprobe::ConfigError("validation file must contain the response column");
    }
    lmmprobe::ValidationBlock val;
    val.x = val_rows.x;
    val.v = val_rows.v;
    val.y = val_rows.y;
    val.cluster_ids = val_rows.cluster_ids;
    request.validation = std::move(val);
  }
  const lmmprobe::PredictionResult pred = lmmprobe::predict(fit_result, request);
  fs::create_directories(common.out_dir);
  std::string csv = "row,cluster,y_hat_full,y_hat_fixed\n";
  for (Eigen::Index j = 0; j < pred.y_hat_full.size(); ++j) {
    csv += std::to_string(j + 1) + "," + request.cluster_ids[static_cast<std::size_t>(j)] + "," +
           format_g17(pred.y_hat_full[j]) + "," + format_g17(pred.y_hat_fixed[j]) + "\n";
  }
  write_text(fs::path(common.out_dir) / "predictions.csv", csv);
  echo_config(fs::path(common.out_dir), {{"command", "predict"},
                                         {"model", model_dir},
                                         {"data", data_path},
                                         {"validation", validation_path},
                                         {"seed", std::to_string(common.seed)}});
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(lmmprobe::SimulationConfig sim, const std::string& g_list, int setting_index,
                 bool paper_grid, const CommonOptions& common) {
  if (paper_grid) {
    const auto grid = lmmprobe::setting_grid();
    std::cout << "setting,p,N,n_i,r,pi,beta,sigma2,g\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& c = grid[i];
      std::string g_text;
      for (Eigen::Index a = 0; a < c.g.rows(); ++a) {
        for (Eigen::Index b = 0; b < c.g.cols(); ++b) {
          if (!g_text.empty()) g_text += ";";
          g_text += format_g17(c.g(a, b));
        }
      }
      std::cout << i + 1 << "," << c.p << "," << c.n_clusters << "," << c.obs_per_cluster << ","
                << c.r << "," << c.pi << "," << c.beta_value << "," << c.sigma2 << "," << g_text
                << "\n";
    }
    return 0;
  }
  if (setting_index > 0) {
    const auto grid = lmmprobe::setting_grid();
    if (setting_index > static_cast<int>(grid.size())) {
      throw lmmprobe::ConfigError("setting index out of range (1..96)");
    }
    sim = grid[static_cast<std::size_t>(setting_index - 1)];
  } else if (!g_list.empty()) {
    const auto parts = split_list(g_list);
    if (parts.size() == 1) {
      sim.g = Eigen::MatrixXd::Constant(1, 1, std::stod(parts[0]));
    } else if (parts.size() == 4) {
      sim.g.resize(2, 2);
      sim.g << std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]), std::stod(parts[3]);
    } else {
      throw lmmprobe::ConfigError("--g expects 1 (r=1) or 4 (r=2, row-major) values");
    }
  }
  sim.seed = common.seed;
  const lmmprobe::SimulatedDataset data = lmmprobe::generate(sim);
  fs::create_directories(common.out_dir);
  lmmprobe::save_dataset((fs::path(common.out_dir) / "train.csv").string(), data.train);
  lmmprobe::save_dataset((fs::path(common.out_dir) / "test.csv").string(), data.test);
  {
    std::string csv = "k,gamma_k,beta_k\n";
    for (Eigen::Index k = 0; k < data.truth.gamma.size(); ++k) {
      csv += std::to_string(k + 1) + "," + std::to_string(data.truth.gamma[k]) + "," +
             format_g17(data.truth.beta[k]) + "\n";
    }
    write_text(fs::path(common.out_dir) / "truth.csv", csv);
  }
  {
    json j;
    j["p"] = data.truth.gamma.size();
    j["n_clusters"] = data.truth.b.rows();
    j["obs_per_cluster"] = sim.obs_per_cluster;
    j["r"] = sim.r;
    j["pi"] = sim.pi;
    j["beta_value"] = sim.beta_value;
    j["sigma2"] = data.truth.sigma2;
    j["G"] = matrix_to_json(data.truth.g);
    j["omega"] = vector_to_json(data.truth.omega);
    j["grf_length_scale"] = sim.grf_length_scale;
    j["seed"] = sim.seed;
    j["n_signals"] = data.truth.gamma.sum();
    write_text(fs::path(common.out_dir) / "params.json", j.dump(2) + "\n");
  }
  echo_config(fs::path(common.out_dir),
              {{"command", "simulate"},
               {"p", std::to_string(sim.p)},
               {"clusters", std::to_string(sim.n_clusters)},
               {"obs", std::to_string(sim.obs_per_cluster)},
               {"r", std::to_string(sim.r)},
               {"pi", format_g17(sim.pi)},
               {"beta", format_g17(sim.beta_value)},
               {"sigma2", format_g17(sim.sigma2)},
               {"length_scale", format_g17(sim.grf_length_scale)},
               {"seed", std::to_string(sim.seed)}});
  return 0;
}

// ---------------------------------------------------------------- cv

int cmd_cv(const std::string& data_path, const SchemaOptions& schema_opts,
           const EngineOptions& engine, int folds, const CommonOptions& common) {
  const lmmprobe::ClusteredDataset ds = lmmprobe::load_dataset(data_path, schema_opts.schema());
  const bool time_split = ds.nonsparse_count() - engine.adjust_covariates >= 2;
  const lmmprobe::CvPlan plan = lmmprobe::make_cv_plan(ds, folds, common.seed, time_split);
  const lmmprobe::EcmConfig config = engine.config(common);
  const auto reports = lmmprobe::cv_run(ds, plan, config, !engine.no_standardize, nullptr);
  fs::create_directories(common.out_dir);
  {
    std::string csv = "cluster,fold\n";
    for (Eigen::Index i = 0; i < ds.cluster_count(); ++i) {
      csv += ds.spans[i].id + "," +
             std::to_string(plan.fold_of_cluster[static_cast<std::size_t>(i)]) + "\n";
    }
    write_text(fs::path(common.out_dir) / "folds.csv", csv);
  }
  {
    std::string csv = "fold,skipped,mspe,mad,n_selected,iterations,converged\n";
    for (const auto& rep : reports) {
      csv += std::to_string(rep.fold) + "," + (rep.skipped ? "1" : "0") + "," +
             format_g17(rep.mspe) + "," + format_g17(rep.mad) + "," +
             std::to_string(rep.n_selected) + "," + std::to_string(rep.iterations) + "," +
             (rep.converged ? "1" : "0") + "\n";
      if (rep.skipped) {
        std::cerr << "warning: fold " << rep.fold << " skipped (no test observations)\n";
      }
    }
    write_text(fs::path(common.out_dir) / "metrics.csv", csv);
  }
  {
    // Wall-clock timings live apart from the metrics so the metric artifacts
    // stay byte-reproducible across runs.
    std::string csv = "fold,runtime_seconds\n";
    for (const auto& rep : reports) {
      csv += std::to_string(rep.fold) + "," + format_g17(rep.runtime_seconds) + "\n";
    }
    write_text(fs::path(common.out_dir) / "timings.csv", csv);
  }
  {
    double mspe_sum = 0, mad_sum = 0;
    long used = 0;
    for (const auto& rep : reports) {
      if (rep.skipped) continue;
      mspe_sum += rep.mspe;
      mad_sum += rep.mad;
      ++used;
    }
    json j;
    j["folds"] = folds;
    j["folds_used"] = used;
    j["time_split"] = plan.time_split;
    j["mean_mspe"] = used ? mspe_sum / used : 0.0;
    j["mean_mad"] = used ? mad_sum / used : 0.0;
    write_text(fs::path(common.out_dir) / "summary.json", j.dump(2) + "\n");
  }
  echo_config(fs::path(common.out_dir), {{"command", "cv"},
                                         {"data", data_path},
                                         {"folds", std::to_string(folds)},
                                         {"time_split", time_split ? "true" : "false"},
                                         {"standardize", engine.no_standardize ? "false" : "true"},
                                         {"seed", std::to_string(common.seed)},
                                         {"max_iter", std::to_string(engine.max_iterations)}});
  return 0;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const std::string& p_list, lmmprobe::BenchConfig bench,
              const CommonOptions& common) {
  std::vector<Eigen::Index> ps;
  for (const auto& item : split_list(p_list)) ps.push_back(std::stol(item));
  if (ps.empty()) throw lmmprobe::ConfigError("--p-list must name at least one p");
  bench.seed = common.seed + 1;
  const lmmprobe::ScalingReport report = lmmprobe::scaling_run(ps, bench);
  fs::create_directories(common.out_dir);
  {
    std::string csv = "p,iteration,seconds\n";
    for (const auto& point : report.points) {
      for (std::size_t it = 0; it < point.iteration_seconds.size(); ++it) {
        csv += std::to_string(point.p) + "," + std::to_string(it + 1) + "," +
               format_g17(point.iteration_seconds[it]) + "\n";
      }
    }
    write_text(fs::path(common.out_dir) / "timing.csv", csv);
  }
  {
    json j;
    j["linear_r2"] = report.linear_r2;
    j["max_matrix_dim"] = report.max_matrix_dim;
    j["max_matrix_cells"] = report.max_matrix_cells;
    json points = json::array();
    for (const auto& point : report.points) {
      json p;
      p["p"] = point.p;
      p["M"] = point.m_obs;
      p["per_iteration_median_s"] = point.per_iteration_median;
      p["total_s"] = point.total_seconds;
      points.push_back(p);
    }
    j["points"] = points;
    write_text(fs::path(common.out_dir) / "summary.json", j.dump(2) + "\n");
  }
  echo_config(fs::path(common.out_dir), {{"command", "bench"},
                                         {"p_list", p_list},
                                         {"iterations", std::to_string(bench.iterations)},
                                         {"seed", std::to_string(common.seed)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse high-dimensional linear mixed models via a partitioned "
               "empirical-Bayes ECM estimator"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; command-line flags win");

  auto* fit_cmd = app.add_subcommand("fit", "fit a model to a clustered CSV dataset");
  std::string fit_data;
  SchemaOptions fit_schema;
  EngineOptions fit_engine;
  CommonOptions fit_common;
  fit_cmd->add_option("--data", fit_data, "input CSV")->required();
  add_schema(fit_cmd, fit_schema);
  add_engine(fit_cmd, fit_engine);
  add_common(fit_cmd, fit_common);

  auto* predict_cmd = app.add_subcommand("predict", "predict new rows from fit artifacts");
  std::string predict_model, predict_data, predict_validation;
  SchemaOptions predict_schema;
  CommonOptions predict_common;
  predict_cmd->add_option("--model", predict_model, "directory with fit artifacts")->required();
  predict_cmd->add_option("--data", predict_data, "CSV of rows to predict")->required();
  predict_cmd->add_option("--validation", predict_validation,
                          "CSV with responses used to predict random effects");
  add_schema(predict_cmd, predict_schema);
  add_common(predict_cmd, predict_common);

  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic clustered dataset");
  lmmprobe::SimulationConfig sim;
  std::string sim_g;
  int sim_setting = 0;
  bool paper_grid = false;
  CommonOptions sim_common;
  sim_cmd->add_option("--p", sim.p, "predictor count (perfect square)");
  sim_cmd->add_option("--clusters", sim.n_clusters, "cluster count");
  sim_cmd->add_option("--obs", sim.obs_per_cluster, "observations per cluster");
  sim_cmd->add_option("--r", sim.r, "random-effect count (1 or 2)");
  sim_cmd->add_option("--pi", sim.pi, "signal proportion");
  sim_cmd->add_option("--beta", sim.beta_value, "effect size (also used for omega)");
  sim_cmd->add_option("--sigma2", sim.sigma2, "noise variance");
  sim_cmd->add_option("--g", sim_g, "true G, comma separated (1 or 4 values)");
  sim_cmd->add_option("--length-scale", sim.grf_length_scale, "field length scale (grid units)");
  sim_cmd->add_flag("--per-cluster-x", sim.per_cluster_x, "one field draw per cluster");
  sim_cmd->add_flag("--random-sign", sim.random_sign, "random signs for nonzero effects");
  sim_cmd->add_option("--setting", sim_setting, "use grid setting 1..96");
  sim_cmd->add_flag("--paper-grid", paper_grid, "list the 96 grid settings and exit");
  add_common(sim_cmd, sim_common, /*out_required=*/false);

  auto* cv_cmd = app.add_subcommand("cv", "cluster-balanced cross-validation");
  std::string cv_data;
  int cv_folds = 5;
  SchemaOptions cv_schema;
  EngineOptions cv_engine;
  CommonOptions cv_common;
  cv_cmd->add_option("--data", cv_data, "input CSV")->required();
  cv_cmd->add_option("--folds", cv_folds, "fold count");
  add_schema(cv_cmd, cv_schema);
  add_engine(cv_cmd, cv_engine);
  add_common(cv_cmd, cv_common);

  auto* bench_cmd = app.add_subcommand("bench", "per-iteration timing across p");
  std::string bench_p_list = "225,450,900,1800";
  lmmprobe::BenchConfig bench;
  CommonOptions bench_common;
  bench_cmd->add_option("--p-list", bench_p_list, "comma-separated p values");
  bench_cmd->add_option("--iters", bench.iterations, "iterations per setting");
  bench_cmd->add_option("--clusters", bench.n_clusters, "cluster count");
  bench_cmd->add_option("--obs", bench.obs_per_cluster, "observations per cluster");
  bench_cmd->add_option("--r", bench.r, "random-effect count");
  add_common(bench_cmd, bench_common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(fit_cmd)) return cmd_fit(fit_data, fit_schema, fit_engine, fit_common);
    if (app.got_subcommand(predict_cmd)) {
      return cmd_predict(predict_model, predict_data, predict_validation, predict_schema,
                         predict_common);
    }
    if (app.got_subcommand(sim_cmd)) {
      if (!paper_grid && sim_common.out_dir.empty()) {
        throw lmmprobe::ConfigError("--out is required unless --paper-grid is given");
      }
      return cmd_simulate(sim, sim_g, sim_setting, paper_grid, sim_common);
    }
    if (app.got_subcommand(cv_cmd)) {
      return cmd_cv(cv_data, cv_schema, cv_engine, cv_folds, cv_common);
    }
    if (app.got_subcommand(bench_cmd)) return cmd_bench(bench_p_list, bench, bench_common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
