#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "lmmprobe/dataset.hpp"
#include "lmmprobe/errors.hpp"
#include "lmmprobe/rng.hpp"
#include "lmmprobe/stats.hpp"

using namespace lmmprobe;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lmmprobe_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("load groups rows by cluster and validates dimensions") {
  const fs::path path = temp_file("small.csv");
  write_file(path,
             "cluster,y,g1,g2,g3,g4\n"
             "a,1.5,0.1,0.2,0.3,0.4\n"
             "a,2.5,0.5,0.6,0.7,0.8\n"
             "a,3.5,0.9,1.0,1.1,1.2\n"
             "b,4.5,1.3,1.4,1.5,1.6\n"
             "b,5.5,1.7,1.8,1.9,2.0\n"
             "b,6.5,2.1,2.2,2.3,2.4\n");
  const ClusteredDataset ds = load_dataset(path.string(), CsvSchema{});
  CHECK(ds.cluster_count() == 2);
  CHECK(ds.total_observations() == 6);
  CHECK(ds.predictor_count() == 4);
  CHECK(ds.nonsparse_count() == 1);
  CHECK(ds.spans[0].id == "a");
  CHECK(ds.y[0] == 1.5);
  CHECK(ds.x(5, 3) == 2.4);
  CHECK((ds.v.col(0).array() == 1.0).all());
}

TEST_CASE("interleaved cluster rows group by first appearance, order preserved") {
  const fs::path path = temp_file("interleaved.csv");
  write_file(path,
             "cluster,y,g1\n"
             "a,1,0.1\n"
             "b,2,0.2\n"
             "a,3,0.3\n"
             "b,4,0.4\n");
  const ClusteredDataset ds = load_dataset(path.string(), CsvSchema{});
  REQUIRE(ds.cluster_count() == 2);
  CHECK(ds.spans[0].id == "a");
  CHECK(ds.spans[1].id == "b");
  // Within-cluster file order is preserved after grouping.
  CHECK(ds.y_of(0)[0] == 1.0);
  CHECK(ds.y_of(0)[1] == 3.0);
  CHECK(ds.y_of(1)[0] == 2.0);
  CHECK(ds.y_of(1)[1] == 4.0);
}

TEST_CASE("missing cells are a hard error") {
  const fs::path path = temp_file("missing.csv");
  write_file(path,
             "cluster,y,g1\n"
             "a,1,0.1\n"
             "a,,0.2\n"
             "b,3,0.3\n");
  CHECK_THROWS_AS(load_dataset(path.string(), CsvSchema{}), IngestionError);
}

TEST_CASE("non-numeric cell errors cite the row") {
  const fs::path path = temp_file("bad_cell.csv");
  write_file(path,
             "cluster,y,g1\n"
             "a,1,0.1\n"
             "a,2,0.2\n"
             "b,3,0.3\n"
             "b,4,0.4\n"
             "b,5,oops\n");
  CHECK_THROWS_WITH_AS(load_dataset(path.string(), CsvSchema{}),
                       doctest::Contains("row 5"), IngestionError);
}

TEST_CASE("duplicate columns and too few clusters are rejected") {
  const fs::path dup = temp_file("dup.csv");
  write_file(dup, "cluster,y,g1,g1\na,1,2,3\nb,4,5,6\n");
  CHECK_THROWS_AS(load_dataset(dup.string(), CsvSchema{}), SchemaError);

  const fs::path one = temp_file("one_cluster.csv");
  write_file(one, "cluster,y,g1\na,1,2\na,3,4\n");
  CHECK_THROWS_AS(load_dataset(one.string(), CsvSchema{}), DataError);
}

TEST_CASE("riboflavin-shaped file loads with a time column") {
  const fs::path path = temp_file("ribo.csv");
  const Eigen::Index p = 4088;
  Rng rng(7);
  std::string content = "cluster,y,time";
  for (Eigen::Index k = 0; k < p; ++k) content += ",g" + std::to_string(k + 1);
  content += "\n";
  // 28 clusters, 111 rows: 27 clusters of 4 rows plus one of 3.
  char buf[32];
  Eigen::Index rows = 0;
  for (int i = 0; i < 28; ++i) {
    const int n_i = (i < 27) ? 4 : 3;
    for (int j = 0; j < n_i; ++j) {
      content += "b" + std::to_string(i + 1);
      std::snprintf(buf, sizeof(buf), ",%.3f,%d", rng.normal(), j + 1);
      content += buf;
      for (Eigen::Index k = 0; k < p; ++k) {
        std::snprintf(buf, sizeof(buf), ",%.3f", rng.normal());
        content += buf;
      }
      content += "\n";
      ++rows;
    }
  }
  REQUIRE(rows == 111);
  write_file(path, content);
  CsvSchema schema;
  schema.nonsparse_columns = {"time"};
  const ClusteredDataset ds = load_dataset(path.string(), schema);
  CHECK(ds.total_observations() == 111);
  CHECK(ds.cluster_count() == 28);
  CHECK(ds.predictor_count() == 4088);
  CHECK(ds.nonsparse_count() == 2);
}

TEST_CASE("round trip through CSV is bit exact") {
  ClusteredDataset ds = testutil::random_dataset(11, 4, 3, 6, 2);
  ds.y[0] = 0.1 + 0.2;  // not exactly representable
  ds.x(2, 3) = 1e-17;
  ds.x(3, 1) = -12345.678912345678;
  const fs::path path = temp_file("roundtrip.csv");
  save_dataset(path.string(), ds);
  CsvSchema schema;
  schema.nonsparse_columns = {ds.v_names[1]};
  const ClusteredDataset back = load_dataset(path.string(), schema);
  REQUIRE(back.total_observations() == ds.total_observations());
  CHECK((back.y.array() == ds.y.array()).all());
  CHECK((back.x.array() == ds.x.array()).all());
  CHECK((back.v.array() == ds.v.array()).all());
}

TEST_CASE("standardize centers and scales every sparse column") {
  ClusteredDataset ds = testutil::random_dataset(3, 2, 3, 2, 1);
  ds.x.col(0) << 1, 2, 3, 1, 2, 3;
  const ClusteredDataset std_ds = standardize(ds);
  CHECK(std_ds.x.col(0).mean() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(sample_sd(std_ds.x.col(0)) == doctest::Approx(1.0).epsilon(1e-14));
  REQUIRE(std_ds.standardization.has_value());
  CHECK(std_ds.standardization->means[0] == doctest::Approx(2.0));

  // Re-standardizing an already-standard column changes nothing.
  ClusteredDataset fresh = std_ds;
  fresh.standardization.reset();
  const ClusteredDataset again = standardize(fresh);
  CHECK((again.x - std_ds.x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant columns cannot be standardized") {
  ClusteredDataset ds = testutil::random_dataset(4, 2, 3, 2, 1);
  ds.x.col(1).setConstant(5.0);
  CHECK_THROWS_WITH_AS(standardize(ds), doctest::Contains("x2"), DataError);
}

TEST_CASE("standardized and original scales give identical predictions") {
  const ClusteredDataset raw = testutil::random_dataset(5, 3, 4, 5, 1);
  const ClusteredDataset std_ds = standardize(raw);
  Rng rng(9);
  Eigen::VectorXd coef(5);
  for (int k = 0; k < 5; ++k) coef[k] = rng.normal();
  // Coefficients on the standardized scale map to original scale as
  // coef/scale with the means folded into an intercept shift.
  const auto& rec = *std_ds.standardization;
  const Eigen::VectorXd coef_orig = coef.cwiseQuotient(rec.scales);
  const double shift = -coef.cwiseQuotient(rec.scales).dot(rec.means);
  const Eigen::VectorXd pred_std = std_ds.x * coef;
  const Eigen::VectorXd pred_orig =
      (raw.x * coef_orig).array() + shift;
  CHECK((pred_std - pred_orig).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("validate flags collinearity and rank deficiency") {
  ClusteredDataset ds = testutil::random_dataset(6, 3, 4, 3, 2);
  SUBCASE("clean data has no diagnostics") {
    CHECK(validate(ds).empty());
  }
  SUBCASE("a predictor equal to the intercept is collinear") {
    ds.x.col(1).setOnes();
    const auto diags = validate(ds);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].kind == Diagnostic::Kind::kCollinearWithV);
    CHECK(diags[0].index == 1);
    CHECK_FALSE(diags[0].fatal);
  }
  SUBCASE("duplicated V columns are rank deficient and fatal") {
    ds.v.col(1) = ds.v.col(0);
    const auto diags = validate(ds);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].kind == Diagnostic::Kind::kRankDeficientV);
    CHECK(diags[0].fatal);
  }
}
