#include "lmmprobe/moments.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "lmmprobe/errors.hpp"
#include "lmmprobe/matdim.hpp"

namespace lmmprobe {

WMoments w_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                   const Eigen::VectorXd& probs) {
  const Eigen::Index m = x.rows();
  const Eigen::Index p = x.cols();
  if (beta.size() != p || probs.size() != p) {
    throw DimensionError("w_moments: beta/probs length does not match predictor count");
  }
  if ((probs.array() < 0.0).any() || (probs.array() > 1.0).any()) {
    throw NumericalError("w_moments: probabilities outside [0,1]");
  }
  matdim::record(m, 1);
  WMoments wm;
  wm.w0 = x * beta.cwiseProduct(probs);
  wm.var_w0 = Eigen::VectorXd::Zero(m);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double d = beta[k] * beta[k] * probs[k] * (1.0 - probs[k]);
    if (d != 0.0) wm.var_w0.array() += x.col(k).array().square() * d;
  }
  wm.w0_sq = wm.var_w0 + wm.w0.cwiseProduct(wm.w0);
  return wm;
}

long partition_w_moments(Eigen::Index k, const WMoments& wm,
                         const Eigen::Ref<const Eigen::VectorXd>& x_k, double beta_k,
                         double prob_k, Eigen::VectorXd& e_w, Eigen::VectorXd& var_w) {
  const Eigen::Index m = wm.w0.size();
  const double c = beta_k * prob_k;
  const double d = beta_k * beta_k * prob_k * (1.0 - prob_k);
  e_w.resize(m);
  var_w.resize(m);
  long floored = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    e_w[j] = wm.w0[j] - x_k[j] * c;
    double value = wm.var_w0[j] - x_k[j] * x_k[j] * d;
    if (value < 0.0) {
      value = 0.0;
      ++floored;
    }
    var_w[j] = value;
  }
  (void)k;
  return floored;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> partition_w_moments(
    Eigen::Index k, const WMoments& wm, const Eigen::Ref<const Eigen::VectorXd>& x_k,
    double beta_k, double prob_k) {
  Eigen::VectorXd e_w, var_w;
  partition_w_moments(k, wm, x_k, beta_k, prob_k, e_w, var_w);
  return {std::move(e_w), std::move(var_w)};
}

PsiBlocks psi_blocks(const ClusteredDataset& dataset, Eigen::Index r_re, double sigma2,
                     const Eigen::MatrixXd& g) {
  if (!(sigma2 > 0.0)) throw NumericalError("psi_blocks: sigma2 must be positive");
  if (g.rows() != r_re || g.cols() != r_re) {
    throw DimensionError("psi_blocks: G dimension does not match random-effect count");
  }
  matdim::record(r_re, r_re);
  PsiBlocks out;
  Eigen::MatrixXd g_work = 0.5 * (g + g.transpose());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(g_work);
  if (!lu.isInvertible()) {
    // G legitimately shrinks during fitting; a small ridge keeps it usable.
    const double ridge = 1e-10 * g_work.trace() / static_cast<double>(r_re);
    g_work.diagonal().array() += ridge;
    lu.compute(g_work);
    out.ridge_applied = 1;
    if (!lu.isInvertible()) {
      throw NumericalError("psi_blocks: G is numerically singular after regularization");
    }
  }
  const Eigen::MatrixXd g_inv = lu.inverse();
  const Eigen::Index n_clusters = dataset.cluster_count();
  out.psi.resize(static_cast<std::size_t>(n_clusters));
  out.psi_inv.resize(static_cast<std::size_t>(n_clusters));
  for (Eigen::Index i = 0; i < n_clusters; ++i) {
    const auto v_i = dataset.v_of(i).leftCols(r_re);
    Eigen::MatrixXd psi = v_i.transpose() * v_i + sigma2 * g_inv;
    psi = 0.5 * (psi + psi.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(psi);
    Eigen::MatrixXd psi_inv;
    if (llt.info() == Eigen::Success) {
      psi_inv = llt.solve(Eigen::MatrixXd::Identity(r_re, r_re));
    } else {
      Eigen::FullPivLU<Eigen::MatrixXd> plu(psi);
      if (!plu.isInvertible()) {
        throw NumericalError("psi_blocks: Psi block " + std::to_string(i) + " is singular");
      }
      psi_inv = plu.inverse();
    }
    psi_inv = 0.5 * (psi_inv + psi_inv.transpose());
    out.psi[static_cast<std::size_t>(i)] = std::move(psi);
    out.psi_inv[static_cast<std::size_t>(i)] = std::move(psi_inv);
  }
  return out;
}

RandomEffectMoments b_moments(const ClusteredDataset& dataset, Eigen::Index r_re,
                              const PsiBlocks& psi, const Eigen::VectorXd& residual_base,
                              double sigma2) {
  if (residual_base.size() != dataset.total_observations()) {
    throw DimensionError("b_moments: residual length does not match dataset");
  }
  const Eigen::Index n_clusters = dataset.cluster_count();
  matdim::record(n_clusters, r_re);
  RandomEffectMoments rem;
  rem.b.resize(n_clusters, r_re);
  rem.b_cov.resize(static_cast<std::size_t>(n_clusters));
  rem.b_sq.resize(static_cast<std::size_t>(n_clusters));
  for (Eigen::Index i = 0; i < n_clusters; ++i) {
    const auto& span = dataset.spans[i];
    const auto v_i = dataset.v_of(i).leftCols(r_re);
    const Eigen::MatrixXd& psi_inv = psi.psi_inv[static_cast<std::size_t>(i)];
    const Eigen::VectorXd b_i = psi_inv * (v_i.transpose() * residual_base.segment(span.start, span.size));
    Eigen::MatrixXd cov = sigma2 * psi_inv;
    cov = 0.5 * (cov + cov.transpose());
    rem.b.row(i) = b_i.transpose();
    rem.b_sq[static_cast<std::size_t>(i)] = cov + b_i * b_i.transpose();
    rem.b_cov[static_cast<std::size_t>(i)] = std::move(cov);
  }
  return rem;
}

Eigen::VectorXd vb_mean(const ClusteredDataset& dataset, Eigen::Index r_re,
                        const RandomEffectMoments& rem) {
  Eigen::VectorXd out(dataset.total_observations());
  matdim::record(out.size(), 1);
  for (Eigen::Index i = 0; i < dataset.cluster_count(); ++i) {
    const auto& span = dataset.spans[i];
    out.segment(span.start, span.size) =
        dataset.v_of(i).leftCols(r_re) * rem.b.row(i).transpose();
  }
  return out;
}

Eigen::VectorXd cross_moments(const ClusteredDataset& dataset, Eigen::Index r_re,
                              const PsiBlocks& psi, const Eigen::VectorXd& var_w0) {
  Eigen::VectorXd out(dataset.total_observations());
  matdim::record(out.size(), 1);
  for (Eigen::Index i = 0; i < dataset.cluster_count(); ++i) {
    const auto& span = dataset.spans[i];
    const auto v_i = dataset.v_of(i).leftCols(r_re);
    const Eigen::MatrixXd& psi_inv = psi.psi_inv[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < span.size; ++j) {
      const auto row = v_i.row(j);
      const double h_jj = (row * psi_inv * row.transpose()).value();
      out[span.start + j] = -h_jj * var_w0[span.start + j];
    }
  }
  return out;
}

Eigen::VectorXd e2_cross_update(const ClusteredDataset& dataset, Eigen::Index r_re,
                                const PsiBlocks& psi, const WMoments& wm) {
  Eigen::VectorXd out(dataset.total_observations());
  matdim::record(out.size(), 1);
  for (Eigen::Index i = 0; i < dataset.cluster_count(); ++i) {
    const auto& span = dataset.spans[i];
    const auto v_i = dataset.v_of(i).leftCols(r_re);
    const Eigen::VectorXd inner =
        dataset.y.segment(span.start, span.size).cwiseProduct(wm.w0.segment(span.start, span.size)) -
        wm.w0_sq.segment(span.start, span.size);
    out.segment(span.start, span.size) =
        v_i * (psi.psi_inv[static_cast<std::size_t>(i)] * (v_i.transpose() * inner));
  }
  return out;
}

Eigen::VectorXd vb_second_moments(const ClusteredDataset& dataset, Eigen::Index r_re,
                                  const PsiBlocks& psi, const RandomEffectMoments& rem,
                                  double sigma2) {
  Eigen::VectorXd out(dataset.total_observations());
  matdim::record(out.size(), 1);
  for (Eigen::Index i = 0; i < dataset.cluster_count(); ++i) {
    const auto& span = dataset.spans[i];
    const auto v_i = dataset.v_of(i).leftCols(r_re);
    const Eigen::MatrixXd& psi_inv = psi.psi_inv[static_cast<std::size_t>(i)];
    const Eigen::VectorXd mean_j = v_i * rem.b.row(i).transpose();
    for (Eigen::Index j = 0; j < span.size; ++j) {
      const auto row = v_i.row(j);
      const double variance = sigma2 * (row * psi_inv * row.transpose()).value();
      out[span.start + j] = variance + mean_j[j] * mean_j[j];
    }
  }
  return out;
}

}  // namespace lmmprobe
