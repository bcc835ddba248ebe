#include "lmmprobe/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "lmmprobe/errors.hpp"
#include "lmmprobe/stats.hpp"

namespace lmmprobe {

namespace {

Eigen::Index integer_sqrt(Eigen::Index p) {
  const Eigen::Index side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(p))));
  if (side * side != p) return -1;
  return side;
}

// Cholesky factor of the one-dimensional squared-exponential kernel with a
// small diagonal jitter.
Eigen::MatrixXd kernel_factor(Eigen::Index side, double length_scale) {
  Eigen::MatrixXd kernel(side, side);
  const double denom = 2.0 * length_scale * length_scale;
  for (Eigen::Index a = 0; a < side; ++a) {
    for (Eigen::Index b = 0; b < side; ++b) {
      const double d = static_cast<double>(a - b);
      kernel(a, b) = std::exp(-d * d / denom);
    }
  }
  kernel.diagonal().array() += 1e-8;
  Eigen::LLT<Eigen::MatrixXd> llt(kernel);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("squared-exponential kernel factor is not positive definite");
  }
  return llt.matrixL();
}

Eigen::VectorXd sample_field(const Eigen::MatrixXd& factor, Rng& rng) {
  const Eigen::Index side = factor.rows();
  Eigen::MatrixXd z(side, side);
  for (Eigen::Index a = 0; a < side; ++a) {
    for (Eigen::Index b = 0; b < side; ++b) z(a, b) = rng.normal();
  }
  const Eigen::MatrixXd field = factor * z * factor.transpose();
  Eigen::VectorXd out(side * side);
  for (Eigen::Index a = 0; a < side; ++a) {
    out.segment(a * side, side) = field.row(a).transpose();
  }
  return out;
}

Eigen::MatrixXd cholesky_of(const Eigen::MatrixXd& g) {
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("random-effect covariance is not positive definite");
  }
  return llt.matrixL();
}

ClusteredDataset assemble_half(const std::vector<Cluster>& clusters) {
  return build_dataset(clusters);
}

}  // namespace

void SimulationConfig::check() const {
  if (integer_sqrt(p) < 2) throw ConfigError("p must be a perfect square with sqrt(p) >= 2");
  if (n_clusters < 2) throw ConfigError("need at least 2 clusters");
  if (obs_per_cluster < 2) throw ConfigError("need at least 2 observations per cluster");
  if (r != 1 && r != 2) throw ConfigError("r must be 1 or 2");
  if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("pi must be in (0,1)");
  if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
  if (!(grf_length_scale > 0.0)) throw ConfigError("grf_length_scale must be positive");
  if (g.size() != 0 && (g.rows() != r || g.cols() != r)) {
    throw ConfigError("G dimension does not match r");
  }
}

Eigen::VectorXd sample_grf(Eigen::Index side, double length_scale, Rng& rng) {
  if (side < 2) throw ConfigError("grid side must be >= 2");
  if (!(length_scale > 0.0)) throw ConfigError("length scale must be positive");
  return sample_field(kernel_factor(side, length_scale), rng);
}

Eigen::VectorXd sample_grf(Eigen::Index side, double length_scale, std::uint64_t seed) {
  Rng rng(seed);
  return sample_grf(side, length_scale, rng);
}

SimulatedDataset generate(const SimulationConfig& config) {
  config.check();
  const Eigen::Index side = integer_sqrt(config.p);
  const Eigen::Index p = config.p;
  const Eigen::Index n_clusters = config.n_clusters;
  const Eigen::Index n_i = config.obs_per_cluster;
  const Eigen::Index r = config.r;
  Eigen::MatrixXd g = config.g;
  if (g.size() == 0) g = 5.0 * Eigen::MatrixXd::Identity(r, r);

  Rng rng(config.seed);
  const Eigen::MatrixXd factor = kernel_factor(side, config.grf_length_scale);

  // Support: the round(pi * p) largest sites of one field draw.
  const Eigen::VectorXd support_field = sample_field(factor, rng);
  const Eigen::Index n_signals =
      static_cast<Eigen::Index>(std::llround(config.pi * static_cast<double>(p)));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::nth_element(order.begin(), order.begin() + n_signals, order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return support_field[a] > support_field[b];
                   });
  Eigen::VectorXi gamma = Eigen::VectorXi::Zero(p);
  for (Eigen::Index s = 0; s < n_signals; ++s) gamma[order[static_cast<std::size_t>(s)]] = 1;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!gamma[k]) continue;
    double value = config.beta_value;
    if (config.random_sign && rng.uniform() < 0.5) value = -value;
    beta[k] = value;
  }

  // Predictor rows: independent field draws (or one per cluster), columns
  // standardized over all generated rows.
  const Eigen::Index total_rows = n_clusters * n_i;
  Eigen::MatrixXd x(total_rows, p);
  for (Eigen::Index i = 0; i < n_clusters; ++i) {
    if (config.per_cluster_x) {
      const Eigen::VectorXd row = sample_field(factor, rng);
      for (Eigen::Index j = 0; j < n_i; ++j) x.row(i * n_i + j) = row.transpose();
    } else {
      for (Eigen::Index j = 0; j < n_i; ++j) {
        x.row(i * n_i + j) = sample_field(factor, rng).transpose();
      }
    }
  }
  for (Eigen::Index k = 0; k < p; ++k) {
    const double mean = x.col(k).mean();
    const double sd = sample_sd(x.col(k));
    if (!(sd > 0.0)) {
      throw NumericalError("generated predictor column is constant; increase rows");
    }
    x.col(k) = (x.col(k).array() - mean) / sd;
  }

  const Eigen::MatrixXd g_factor = cholesky_of(g);
  Eigen::MatrixXd b(n_clusters, r);
  for (Eigen::Index i = 0; i < n_clusters; ++i) {
    Eigen::VectorXd z(r);
    for (Eigen::Index a = 0; a < r; ++a) z[a] = rng.normal();
    b.row(i) = (g_factor * z).transpose();
  }

  const Eigen::VectorXd omega = Eigen::VectorXd::Constant(r, config.beta_value);
  const Eigen::Index n_train = (n_i + 1) / 2;
  std::vector<Cluster> train_clusters, test_clusters;
  train_clusters.reserve(static_cast<std::size_t>(n_clusters));
  test_clusters.reserve(static_cast<std::size_t>(n_clusters));
  for (Eigen::Index i = 0; i < n_clusters; ++i) {
    Eigen::MatrixXd v(n_i, r);
    v.col(0).setOnes();
    if (r == 2) {
      for (Eigen::Index j = 0; j < n_i; ++j) v(j, 1) = static_cast<double>(j + 1);
    }
    Eigen::VectorXd y(n_i);
    const auto x_i = x.middleRows(i * n_i, n_i);
    const Eigen::VectorXd mean_part = x_i * beta + v * omega + v * b.row(i).transpose();
    const double noise_sd = std::sqrt(config.sigma2);
    for (Eigen::Index j = 0; j < n_i; ++j) y[j] = mean_part[j] + noise_sd * rng.normal();

    const std::string id = "c" + std::to_string(i + 1);
    Cluster train{id, y.head(n_train), x_i.topRows(n_train), v.topRows(n_train)};
    Cluster test{id, y.tail(n_i - n_train), x_i.bottomRows(n_i - n_train),
                 v.bottomRows(n_i - n_train)};
    train_clusters.push_back(std::move(train));
    test_clusters.push_back(std::move(test));
  }

  SimulatedDataset out;
  out.train = assemble_half(train_clusters);
  out.test = assemble_half(test_clusters);
  if (r == 2) {
    out.train.v_names[1] = "time";
    out.test.v_names[1] = "time";
  }
  out.truth.gamma = std::move(gamma);
  out.truth.beta = std::move(beta);
  out.truth.b = std::move(b);
  out.truth.g = std::move(g);
  out.truth.sigma2 = config.sigma2;
  out.truth.omega = omega;
  return out;
}

std::vector<SimulationConfig> setting_grid() {
  std::vector<SimulationConfig> grid;
  const Eigen::Index grid_p[3] = {225, 625, 5625};
  for (int ip = 0; ip < 3; ++ip) {
    const Eigen::Index p = grid_p[ip];
    const Eigen::Index n_clusters = (p == 225) ? 50 : (p == 625 ? 100 : 250);
    const Eigen::Index n_i = (p == 5625) ? 8 : 6;
    const double sigmas[2] = {p == 5625 ? 100.0 : 10.0, p == 5625 ? 150.0 : 15.0};
    for (int r = 1; r <= 2; ++r) {
      Eigen::MatrixXd g_cases[2];
      if (r == 1) {
        g_cases[0] = Eigen::MatrixXd::Constant(1, 1, p == 5625 ? 50.0 : 5.0);
        g_cases[1] = Eigen::MatrixXd::Constant(1, 1, p == 5625 ? 100.0 : 10.0);
      } else if (p == 5625) {
        g_cases[0] = (Eigen::MatrixXd(2, 2) << 40.0, 0.0, 0.0, 25.0).finished();
        g_cases[1] = (Eigen::MatrixXd(2, 2) << 60.0, 10.0, 10.0, 35.0).finished();
      } else {
        g_cases[0] = (Eigen::MatrixXd(2, 2) << 4.0, 0.0, 0.0, 2.5).finished();
        g_cases[1] = (Eigen::MatrixXd(2, 2) << 6.0, 1.0, 1.0, 3.5).finished();
      }
      for (double pi : {0.05, 0.1}) {
        for (double beta : {0.5, 0.75}) {
          for (int is = 0; is < 2; ++is) {
            for (int ig = 0; ig < 2; ++ig) {
              SimulationConfig config;
              config.p = p;
              config.n_clusters = n_clusters;
              config.obs_per_cluster = n_i;
              config.r = r;
              config.pi = pi;
              config.beta_value = beta;
              config.sigma2 = sigmas[is];
              config.g = g_cases[ig];
              grid.push_back(std::move(config));
            }
          }
        }
      }
    }
  }
  return grid;
}

}  // namespace lmmprobe
