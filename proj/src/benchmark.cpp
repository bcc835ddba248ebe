#include "lmmprobe/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "lmmprobe/errors.hpp"
#include "lmmprobe/matdim.hpp"
#include "lmmprobe/rng.hpp"

namespace lmmprobe {

namespace {

// Benchmark instances need only dimensions, not the full spatial structure:
// iid standard-normal predictors with a random support of round(pi p) signals.
ClusteredDataset bench_dataset(Eigen::Index p, const BenchConfig& config) {
  Rng rng(config.seed + static_cast<std::uint64_t>(p));
  const Eigen::Index n_signals =
      static_cast<Eigen::Index>(std::llround(config.pi * static_cast<double>(p)));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (Eigen::Index s = 0; s < n_signals; ++s) beta[s] = config.beta_value;

  std::vector<Cluster> clusters;
  const double noise_sd = std::sqrt(config.sigma2);
  const double re_sd = std::sqrt(config.g_scale);
  for (Eigen::Index i = 0; i < config.n_clusters; ++i) {
    const Eigen::Index n_i = config.obs_per_cluster;
    Cluster c;
    c.id = "c" + std::to_string(i + 1);
    c.x.resize(n_i, p);
    for (Eigen::Index j = 0; j < n_i; ++j) {
      for (Eigen::Index k = 0; k < p; ++k) c.x(j, k) = rng.normal();
    }
    c.v.resize(n_i, config.r);
    c.v.col(0).setOnes();
    if (config.r == 2) {
      for (Eigen::Index j = 0; j < n_i; ++j) c.v(j, 1) = static_cast<double>(j + 1);
    }
    Eigen::VectorXd b(config.r);
    for (int a = 0; a < config.r; ++a) b[a] = re_sd * rng.normal();
    c.y = c.x * beta + c.v * Eigen::VectorXd::Constant(config.r, config.beta_value) +
          c.v * b;
    for (Eigen::Index j = 0; j < n_i; ++j) c.y[j] += noise_sd * rng.normal();
    clusters.push_back(std::move(c));
  }
  return build_dataset(clusters);
}

}  // namespace

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw DimensionError("linear_fit_r2: need matching inputs");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  const double slope = sxy / sxx;
  const double rss = syy - slope * sxy;
  return 1.0 - rss / syy;
}

ScalingReport scaling_run(const std::vector<Eigen::Index>& p_values, const BenchConfig& base) {
  ScalingReport report;
  std::vector<double> ps, times;
  for (const Eigen::Index p : p_values) {
    const ClusteredDataset ds = bench_dataset(p, base);
    EcmConfig config;
    config.workers = 1;  // timing runs are serial to avoid contention noise
    EcmState state = init_state(ds, config);
    matdim::reset();
    ScalingPoint point;
    point.p = p;
    point.m_obs = ds.total_observations();
    const auto run_start = std::chrono::steady_clock::now();
    for (int it = 1; it <= base.iterations; ++it) {
      state.t = it;
      const auto start = std::chrono::steady_clock::now();
      m1_step(ds, state, config);
      e1_step(ds, state, config);
      m2_step(ds, state, config);
      e2_step(ds, state, config);
      point.iteration_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    point.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
    std::vector<double> sorted = point.iteration_seconds;
    std::sort(sorted.begin(), sorted.end());
    point.per_iteration_median = sorted[sorted.size() / 2];
    report.max_matrix_dim = std::max(report.max_matrix_dim, matdim::max_dim());
    report.max_matrix_cells = std::max(report.max_matrix_cells, matdim::max_cells());
    ps.push_back(static_cast<double>(p));
    times.push_back(point.per_iteration_median);
    report.points.push_back(std::move(point));
  }
  if (ps.size() >= 2) report.linear_r2 = linear_fit_r2(ps, times);
  return report;
}

}  // namespace lmmprobe
