#pragma once

#include <vector>

#include <Eigen/Dense>

#include "lmmprobe/dataset.hpp"
#include "lmmprobe/ecm.hpp"
#include "lmmprobe/rng.hpp"

namespace testutil {

// Random Gaussian clustered dataset; V is [1] or [1, time] by r.
inline lmmprobe::ClusteredDataset random_dataset(std::uint64_t seed, Eigen::Index n_clusters,
                                                 Eigen::Index n_i, Eigen::Index p,
                                                 Eigen::Index r) {
  lmmprobe::Rng rng(seed);
  std::vector<lmmprobe::Cluster> clusters;
  for (Eigen::Index i = 0; i < n_clusters; ++i) {
    lmmprobe::Cluster c;
    c.id = "c" + std::to_string(i + 1);
    c.y.resize(n_i);
    c.x.resize(n_i, p);
    c.v.resize(n_i, r);
    c.v.col(0).setOnes();
    for (Eigen::Index a = 1; a < r; ++a) {
      for (Eigen::Index j = 0; j < n_i; ++j) c.v(j, a) = static_cast<double>(j + 1);
    }
    for (Eigen::Index j = 0; j < n_i; ++j) {
      for (Eigen::Index k = 0; k < p; ++k) c.x(j, k) = rng.normal();
      c.y[j] = rng.normal();
    }
    clusters.push_back(std::move(c));
  }
  return lmmprobe::build_dataset(clusters);
}

// Independent least-squares oracle: QR solve on an explicitly assembled design.
inline Eigen::VectorXd ols_oracle(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  return design.householderQr().solve(y);
}

// Penalized quadratic oracle for the random-effect posterior mean: minimizes
// ||resid - V b||^2 + sigma2 b' G^{-1} b through the augmented least-squares
// system [V; sqrt(sigma2) G^{-1/2}] b ~ [resid; 0], solved by QR.
inline Eigen::VectorXd ridge_oracle(const Eigen::MatrixXd& v, const Eigen::VectorXd& resid,
                                    double sigma2, const Eigen::MatrixXd& g) {
  const Eigen::Index r = v.cols();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  const Eigen::MatrixXd g_inv_half =
      es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
      es.eigenvectors().transpose();
  Eigen::MatrixXd design(v.rows() + r, r);
  design.topRows(v.rows()) = v;
  design.bottomRows(r) = std::sqrt(sigma2) * g_inv_half;
  Eigen::VectorXd target = Eigen::VectorXd::Zero(v.rows() + r);
  target.head(v.rows()) = resid;
  return design.householderQr().solve(target);
}

// Writes a state whose latent moments are exact (no latent variance): probs
// are 0/1 indicators, b is fixed, and all second moments are consistent
// products of first moments.
inline void freeze_state_at_truth(const lmmprobe::ClusteredDataset& ds,
                                  lmmprobe::EcmState& state, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& probs01, const Eigen::MatrixXd& b) {
  state.beta = beta;
  state.probs = probs01;
  state.wm = lmmprobe::w_moments(ds.x, beta, probs01);
  state.rem.b = b;
  for (auto& block : state.rem.b_cov) block.setZero();
  for (std::size_t i = 0; i < state.rem.b_sq.size(); ++i) {
    state.rem.b_sq[i] = b.row(static_cast<Eigen::Index>(i)).transpose() *
                        b.row(static_cast<Eigen::Index>(i));
  }
  state.vbm = lmmprobe::vb_mean(ds, state.r_re, state.rem);
  state.cross.cross_wb = state.wm.w0.cwiseProduct(state.vbm);
  state.cross.vb_second = state.vbm.cwiseProduct(state.vbm);
}

}  // namespace testutil
