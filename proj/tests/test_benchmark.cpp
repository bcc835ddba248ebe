#include "doctest.h"
#include "lmmprobe/benchmark.hpp"
#include "lmmprobe/errors.hpp"

using namespace lmmprobe;

TEST_CASE("linear fit R^2") {
  CHECK(linear_fit_r2({1, 2, 3, 4}, {2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK(linear_fit_r2({1, 2, 3, 4}, {1, -1, 1, -1}) < 0.5);
  CHECK_THROWS_AS(linear_fit_r2({1}, {2}), DimensionError);
}

TEST_CASE("scaling runs record timings and allocation shapes") {
  BenchConfig config;
  config.iterations = 3;
  config.n_clusters = 10;
  config.obs_per_cluster = 4;
  const std::vector<Eigen::Index> ps = {20, 40};
  const ScalingReport report = scaling_run(ps, config);
  REQUIRE(report.points.size() == 2);
  CHECK(report.points[0].p == 20);
  CHECK(report.points[0].m_obs == 40);
  CHECK(report.points[0].iteration_seconds.size() == 3);
  CHECK(report.points[0].per_iteration_median > 0.0);
  // The largest engine temporary is an M-vector or the small Gram, never p x p.
  const Eigen::Index m_obs = report.points[1].m_obs;
  CHECK(report.max_matrix_dim <= std::max<Eigen::Index>(m_obs, 1 + 3));
  CHECK(report.max_matrix_cells < 40 * 40);
}
