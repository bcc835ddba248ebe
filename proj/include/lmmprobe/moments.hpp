#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lmmprobe/dataset.hpp"

namespace lmmprobe {

// First and second moments of the aggregated latent signal W0 per observation.
struct WMoments {
  Eigen::VectorXd w0;      // E(W0)
  Eigen::VectorXd var_w0;  // Var(W0)
  Eigen::VectorXd w0_sq;   // E(W0^2) = var_w0 + w0^2, exact by construction
};

// Posterior moments of the random effects, one block per cluster.
struct RandomEffectMoments {
  Eigen::MatrixXd b;                   // N x r, posterior means
  std::vector<Eigen::MatrixXd> b_cov;  // r x r posterior covariances
  std::vector<Eigen::MatrixXd> b_sq;   // b_cov + b b'
};

// Per-observation cross and second moments of the random-effect contribution.
struct CrossMoments {
  Eigen::VectorXd cross_wb;   // E(W0 * (V b)) per observation
  Eigen::VectorXd vb_second;  // E((V b)^2) per observation
};

// Per-cluster precision-like blocks Psi_i = V_i'V_i + sigma2 * G^{-1} over the
// first r_re columns of v (the random-effect design).
struct PsiBlocks {
  std::vector<Eigen::MatrixXd> psi;
  std::vector<Eigen::MatrixXd> psi_inv;
  long ridge_applied = 0;  // times the G inverse needed the ridge floor
};

// w0 = X (beta .* probs); var_w0 = X^2 (beta^2 .* probs .* (1 - probs)).
WMoments w_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                   const Eigen::VectorXd& probs);

// Moments of W_k (all predictors except k) by subtraction from W0, with
// variances floored at exactly zero.  Returns the number of floored entries.
// wm must have been computed from the same (beta, probs).
long partition_w_moments(Eigen::Index k, const WMoments& wm,
                         const Eigen::Ref<const Eigen::VectorXd>& x_k, double beta_k,
                         double prob_k, Eigen::VectorXd& e_w, Eigen::VectorXd& var_w);
std::pair<Eigen::VectorXd, Eigen::VectorXd> partition_w_moments(
    Eigen::Index k, const WMoments& wm, const Eigen::Ref<const Eigen::VectorXd>& x_k,
    double beta_k, double prob_k);

PsiBlocks psi_blocks(const ClusteredDataset& dataset, Eigen::Index r_re, double sigma2,
                     const Eigen::MatrixXd& g);

// b_i = Psi_i^{-1} V_i' residual_base_i; b_cov_i = sigma2 * Psi_i^{-1}.
// residual_base is Y - V omega0 - alpha0 * E(W0) stacked in cluster order.
RandomEffectMoments b_moments(const ClusteredDataset& dataset, Eigen::Index r_re,
                              const PsiBlocks& psi, const Eigen::VectorXd& residual_base,
                              double sigma2);

// Stacked per-observation means (V_i b_i)_j.
Eigen::VectorXd vb_mean(const ClusteredDataset& dataset, Eigen::Index r_re,
                        const RandomEffectMoments& rem);

// Per-observation covariance contribution Cov(W0, V b) =
// -[V_i Psi_i^{-1} V_i']_jj * Var(W0)_j (diagonal only).
Eigen::VectorXd cross_moments(const ClusteredDataset& dataset, Eigen::Index r_re,
                              const PsiBlocks& psi, const Eigen::VectorXd& var_w0);

// Direct update E(W0 * V b) = V_i Psi_i^{-1} V_i' (Y_i .* w0_i - w0_sq_i).
Eigen::VectorXd e2_cross_update(const ClusteredDataset& dataset, Eigen::Index r_re,
                                const PsiBlocks& psi, const WMoments& wm);

// E((V b)_j^2) = [V_i (sigma2 Psi_i^{-1}) V_i']_jj + ((V_i b_i)_j)^2.
Eigen::VectorXd vb_second_moments(const ClusteredDataset& dataset, Eigen::Index r_re,
                                  const PsiBlocks& psi, const RandomEffectMoments& rem,
                                  double sigma2);

}  // namespace lmmprobe
