#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "lmmprobe/errors.hpp"
#include "lmmprobe/evaluation.hpp"
#include "lmmprobe/rng.hpp"

using namespace lmmprobe;

TEST_CASE("prediction error metrics") {
  Eigen::VectorXd y(2), yhat(2);
  y << 0.0, 2.0;
  yhat << 1.0, 0.0;
  CHECK(mspe(y, y) == 0.0);
  CHECK(mspe(y, yhat) == doctest::Approx(2.5));
  CHECK(mad(y, y) == 0.0);
  Eigen::VectorXd yhat2(2);
  yhat2 << 1.0, 5.0;  // absolute errors (1, 3)
  CHECK(mad(y, yhat2) == doctest::Approx(2.0));

  SUBCASE("constant prediction at the mean gives the biased variance") {
    Rng rng(3);
    Eigen::VectorXd z(50);
    for (int i = 0; i < 50; ++i) z[i] = rng.normal();
    const Eigen::VectorXd constant = Eigen::VectorXd::Constant(50, z.mean());
    const double biased_var = (z.array() - z.mean()).square().sum() / 50.0;
    CHECK(mspe(z, constant) == doctest::Approx(biased_var));
  }
  SUBCASE("single element and empty inputs") {
    Eigen::VectorXd one(1), one_hat(1);
    one << 2.0;
    one_hat << 3.5;
    CHECK(mad(one, one_hat) == doctest::Approx(1.5));
    CHECK_THROWS_AS(mspe(Eigen::VectorXd(), Eigen::VectorXd()), DimensionError);
    CHECK_THROWS_AS(mad(Eigen::VectorXd(), Eigen::VectorXd()), DimensionError);
  }
  SUBCASE("metrics are permutation invariant") {
    Rng rng(5);
    Eigen::VectorXd a(9), b(9);
    for (int i = 0; i < 9; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    Eigen::VectorXd a2 = a.reverse();
    Eigen::VectorXd b2 = b.reverse();
    CHECK(mspe(a, b) == doctest::Approx(mspe(a2, b2)));
    CHECK(mad(a, b) == doctest::Approx(mad(a2, b2)));
  }
}

TEST_CASE("fixed-effect mean squared error") {
  const ClusteredDataset ds = testutil::random_dataset(41, 3, 4, 5, 1);
  Eigen::VectorXd truth(5), est(5);
  truth << 1, 0, 0.5, 0, 0;
  SUBCASE("perfect recovery scores zero") {
    CHECK(mse_fixed(ds.x, truth, truth) == 0.0);
  }
  SUBCASE("the null fit scores the truth's second moment") {
    est.setZero();
    const double expected = (ds.x * truth).squaredNorm() / ds.x.rows();
    CHECK(mse_fixed(ds.x, truth, est) == doctest::Approx(expected));
  }
  SUBCASE("seeded instance matches direct arithmetic") {
    Rng rng(7);
    for (int k = 0; k < 5; ++k) est[k] = rng.normal();
    const double expected = (ds.x * (truth - est)).squaredNorm() / ds.x.rows();
    CHECK(mse_fixed(ds.x, truth, est) == doctest::Approx(expected));
  }
}

TEST_CASE("total-variance mean squared error") {
  const ClusteredDataset ds = testutil::random_dataset(43, 3, 2, 2, 1);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Constant(1, 1, 2.0);
  SUBCASE("exact components score zero") {
    CHECK(mse_total_variance(ds, 1, g, 1.5, g, 1.5) == 0.0);
  }
  SUBCASE("scalar case with one observation per cluster") {
    std::vector<Cluster> clusters;
    for (int i = 0; i < 2; ++i) {
      Cluster c;
      c.id = "c" + std::to_string(i);
      c.y = Eigen::VectorXd::Zero(1);
      c.x = Eigen::MatrixXd::Zero(1, 1);
      c.v = Eigen::MatrixXd::Ones(1, 1);
      clusters.push_back(std::move(c));
    }
    const ClusteredDataset singles = build_dataset(clusters);
    const Eigen::MatrixXd g_hat = Eigen::MatrixXd::Constant(1, 1, 3.0);
    // Entry error is (G_hat + s2_hat - G - s2)^2 = (3+1-2-1.5)^2 = 0.25.
    CHECK(mse_total_variance(singles, 1, g_hat, 1.0, g, 1.5) == doctest::Approx(0.25));
  }
  SUBCASE("hand 2x2 case") {
    std::vector<Cluster> clusters;
    for (int i = 0; i < 2; ++i) {
      Cluster c;
      c.id = "c" + std::to_string(i);
      c.y = Eigen::VectorXd::Zero(2);
      c.x = Eigen::MatrixXd::Zero(2, 1);
      c.v = Eigen::MatrixXd::Ones(2, 1);
      clusters.push_back(std::move(c));
    }
    const ClusteredDataset pairs = build_dataset(clusters);
    const Eigen::MatrixXd g_hat = Eigen::MatrixXd::Constant(1, 1, 3.0);
    // Marginal blocks: hat = [[3+1, 3],[3, 3+1]], true = [[2+1.5, 2],[2, 2+1.5]].
    // Differences: diagonal 0.5, off-diagonal 1.0 -> mean of squares over 4
    // entries = (2*0.25 + 2*1.0)/4 = 0.625.
    CHECK(mse_total_variance(pairs, 1, g_hat, 1.0, g, 1.5) == doctest::Approx(0.625));
  }
}

TEST_CASE("selection metrics") {
  SUBCASE("perfect selection") {
    Eigen::VectorXi gamma(4);
    gamma << 1, 0, 1, 0;
    const SelectionMetrics m = selection_metrics({0, 2}, gamma);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.mcc == doctest::Approx(1.0));
  }
  SUBCASE("empty selection with signals present") {
    Eigen::VectorXi gamma(4);
    gamma << 1, 0, 1, 0;
    const SelectionMetrics m = selection_metrics({}, gamma);
    CHECK(m.sensitivity == 0.0);
    CHECK(m.mcc == 0.0);  // degenerate denominator convention
  }
  SUBCASE("hand-computed confusion matrix") {
    // TP=2, FP=1, FN=1, TN=6 over p=10.
    Eigen::VectorXi gamma(10);
    gamma << 1, 1, 1, 0, 0, 0, 0, 0, 0, 0;
    const SelectionMetrics m = selection_metrics({0, 1, 3}, gamma);
    CHECK(m.sensitivity == doctest::Approx(2.0 / 3.0));
    CHECK(m.specificity == doctest::Approx(6.0 / 7.0));
    CHECK(m.mcc == doctest::Approx(11.0 / 21.0));
  }
  SUBCASE("matches brute-force confusion counts on random pairs") {
    Rng rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
      const Eigen::Index p = 12;
      Eigen::VectorXi gamma(p);
      std::vector<Eigen::Index> selected;
      for (Eigen::Index k = 0; k < p; ++k) {
        gamma[k] = rng.uniform() < 0.4 ? 1 : 0;
        if (rng.uniform() < 0.4) selected.push_back(k);
      }
      double tp = 0, fp = 0, tn = 0, fn = 0;
      for (Eigen::Index k = 0; k < p; ++k) {
        const bool chosen =
            std::find(selected.begin(), selected.end(), k) != selected.end();
        if (gamma[k] && chosen) ++tp;
        if (!gamma[k] && chosen) ++fp;
        if (gamma[k] && !chosen) ++fn;
        if (!gamma[k] && !chosen) ++tn;
      }
      const double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
      const double expected = denom > 0 ? (tp * tn - fp * fn) / denom : 0.0;
      CHECK(selection_metrics(selected, gamma).mcc == doctest::Approx(expected));
    }
  }
}

TEST_CASE("fold plans are balanced, exclusive, and deterministic") {
  const ClusteredDataset ds = testutil::random_dataset(51, 10, 4, 3, 1);
  const CvPlan plan = make_cv_plan(ds, 5, 99, false);
  std::vector<int> counts(5, 0);
  for (int f : plan.fold_of_cluster) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[static_cast<std::size_t>(f)];
  }
  for (int c : counts) CHECK(c == 2);
  const CvPlan again = make_cv_plan(ds, 5, 99, false);
  CHECK(plan.fold_of_cluster == again.fold_of_cluster);
  const CvPlan different = make_cv_plan(ds, 5, 100, false);
  CHECK(plan.fold_of_cluster != different.fold_of_cluster);
  CHECK_THROWS_AS(make_cv_plan(ds, 12, 1, false), ConfigError);
}

TEST_CASE("test subfold sizing follows the measurement-count rule") {
  CHECK(test_rows_for_cluster(2) == 1);
  CHECK(test_rows_for_cluster(3) == 1);
  CHECK(test_rows_for_cluster(4) == 2);
  CHECK(test_rows_for_cluster(6) == 2);
}

TEST_CASE("cross-validation produces one report per fold") {
  SimulationConfig sim;
  sim.p = 25;
  sim.n_clusters = 15;
  sim.obs_per_cluster = 6;
  sim.r = 1;
  sim.pi = 0.2;
  sim.beta_value = 1.0;
  sim.sigma2 = 1.0;
  sim.g = Eigen::MatrixXd::Constant(1, 1, 1.0);
  sim.seed = 606;
  const SimulatedDataset data = generate(sim);
  EcmConfig config;
  config.max_iterations = 60;
  const CvPlan plan = make_cv_plan(data.train, 5, 7, false);
  const auto reports = cv_run(data.train, plan, config, true, &data.truth);
  REQUIRE(reports.size() == 5);
  for (const auto& rep : reports) {
    CHECK_FALSE(rep.skipped);
    CHECK(rep.mspe > 0.0);
    CHECK(rep.sensitivity.has_value());
    CHECK(rep.mse_total_variance.has_value());
  }
}

TEST_CASE("a fold without clusters is skipped with a warning flag") {
  const ClusteredDataset ds = testutil::random_dataset(53, 6, 4, 4, 1);
  CvPlan plan;
  plan.n_folds = 3;
  plan.time_split = false;
  plan.fold_of_cluster = {0, 0, 0, 1, 1, 1};  // fold 2 left empty
  EcmConfig config;
  config.max_iterations = 5;
  const auto reports = cv_run(ds, plan, config, false, nullptr);
  REQUIRE(reports.size() == 3);
  CHECK_FALSE(reports[0].skipped);
  CHECK_FALSE(reports[1].skipped);
  CHECK(reports[2].skipped);
}
