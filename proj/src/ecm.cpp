#include "lmmprobe/ecm.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/LU>

#include "lmmprobe/empirical_bayes.hpp"
#include "lmmprobe/errors.hpp"
#include "lmmprobe/matdim.hpp"
#include "lmmprobe/parallel.hpp"
#include "lmmprobe/stats.hpp"

namespace lmmprobe {

namespace {

constexpr double kZeroDiagonal = 1e-280;
constexpr double kGramRidge = 1e-8;

struct SolveExtras {
  long floored = 0;
};

// Assembles and solves one partition's conditional-maximization system.
// Column layout: [x_k (when present), v columns, W, Vb].  A is the Gram with
// latent second moments; B replaces them with products of first moments.
PartitionSolution assemble_and_solve(const ClusteredDataset& ds, const EcmState& state,
                                     std::optional<Eigen::Index> k, SolveExtras* extras) {
  const Eigen::Index m_obs = ds.total_observations();
  const Eigen::Index ra = ds.nonsparse_count();
  const bool has_x = k.has_value();
  const Eigen::Index dim = (has_x ? 1 : 0) + ra + 2;
  const Eigen::Index iw = (has_x ? 1 : 0) + ra;
  const Eigen::Index ib = iw + 1;

  Eigen::VectorXd e_w, var_w;
  double c_k = 0.0;
  const double* xk = nullptr;
  if (has_x) {
    const Eigen::Index kk = *k;
    const long floored = partition_w_moments(kk, state.wm, ds.x.col(kk), state.beta[kk],
                                             state.probs[kk], e_w, var_w);
    if (extras) extras->floored += floored;
    c_k = state.beta[kk] * state.probs[kk];
    xk = ds.x.col(kk).data();
  } else {
    e_w = state.wm.w0;
    var_w = state.wm.var_w0;
  }

  matdim::record(dim, dim);
  Eigen::MatrixXd b_gram = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd z(dim);
  double sum_ew2 = 0.0, sum_cross = 0.0, sum_vb2 = 0.0;
  for (Eigen::Index j = 0; j < m_obs; ++j) {
    Eigen::Index at = 0;
    if (has_x) z[at++] = xk[j];
    for (Eigen::Index a = 0; a < ra; ++a) z[at++] = ds.v(j, a);
    z[at++] = e_w[j];
    const double vb_j = state.vbm[j];
    z[at] = vb_j;
    b_gram.selfadjointView<Eigen::Upper>().rankUpdate(z);
    rhs.noalias() += z * ds.y[j];
    sum_ew2 += var_w[j] + e_w[j] * e_w[j];
    sum_cross += state.cross.cross_wb[j] - (has_x ? xk[j] * c_k * vb_j : 0.0);
    sum_vb2 += state.cross.vb_second[j];
  }
  b_gram = b_gram.selfadjointView<Eigen::Upper>();
  Eigen::MatrixXd a_gram = b_gram;
  a_gram(iw, iw) = sum_ew2;
  a_gram(iw, ib) = a_gram(ib, iw) = sum_cross;
  a_gram(ib, ib) = sum_vb2;

  // Structurally zero columns (zero second moment on the diagonal) carry no
  // information; drop them and report zero coefficients.
  std::vector<Eigen::Index> kept;
  kept.reserve(static_cast<std::size_t>(dim));
  for (Eigen::Index l = 0; l < dim; ++l) {
    if (a_gram(l, l) > kZeroDiagonal) kept.push_back(l);
  }

  PartitionSolution sol;
  sol.xi = Eigen::VectorXd::Zero(dim);
  sol.sandwich = Eigen::MatrixXd::Zero(dim, dim);
  if (kept.empty()) {
    sol.failed = true;
    return sol;
  }
  const Eigen::Index dr = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd a_r(dr, dr), b_r(dr, dr);
  Eigen::VectorXd rhs_r(dr);
  for (Eigen::Index c = 0; c < dr; ++c) {
    rhs_r[c] = rhs[kept[static_cast<std::size_t>(c)]];
    for (Eigen::Index d = 0; d < dr; ++d) {
      a_r(c, d) = a_gram(kept[static_cast<std::size_t>(c)], kept[static_cast<std::size_t>(d)]);
      b_r(c, d) = b_gram(kept[static_cast<std::size_t>(c)], kept[static_cast<std::size_t>(d)]);
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a_r);
  if (!lu.isInvertible()) {
    const double ridge = kGramRidge * a_r.diagonal().mean();
    a_r.diagonal().array() += ridge;
    lu.compute(a_r);
    sol.used_ridge = true;
    if (!lu.isInvertible()) {
      sol.failed = true;
      return sol;
    }
  }
  const Eigen::VectorXd xi_r = lu.solve(rhs_r);
  const Eigen::MatrixXd a_inv = lu.inverse();
  const Eigen::MatrixXd sandwich_r = a_inv * b_r * a_inv;
  for (Eigen::Index c = 0; c < dr; ++c) {
    sol.xi[kept[static_cast<std::size_t>(c)]] = xi_r[c];
    for (Eigen::Index d = 0; d < dr; ++d) {
      sol.sandwich(kept[static_cast<std::size_t>(c)], kept[static_cast<std::size_t>(d)]) =
          sandwich_r(c, d);
    }
  }
  return sol;
}

// Trace term of the sigma2 update at the previous cycle's (sigma2, Psi):
// sum_i tr{V_i'V_i (sigma^{-2} Psi_i)^{-1}} = sigma2 sum_i tr(V_i'V_i Psi_i^{-1}).
double trace_term(const ClusteredDataset& ds, const EcmState& state) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < ds.cluster_count(); ++i) {
    const auto v_i = ds.v_of(i).leftCols(state.r_re);
    const Eigen::MatrixXd& psi_inv = state.psi.psi_inv[static_cast<std::size_t>(i)];
    total += state.sigma2 * (v_i.transpose() * v_i * psi_inv).trace();
  }
  return total;
}

Eigen::MatrixXd average_b_second_moments(const RandomEffectMoments& rem) {
  const Eigen::Index n = static_cast<Eigen::Index>(rem.b_sq.size());
  const Eigen::Index r = rem.b.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(r, r);
  for (const auto& block : rem.b_sq) g += block;
  g /= static_cast<double>(n);
  return 0.5 * (g + g.transpose());
}

void apply_partition_zero(const ClusteredDataset& ds, EcmState& state,
                          const PartitionSolution& sol) {
  if (sol.failed) {
    throw NumericalError("partition-0 system is singular; cannot continue");
  }
  const Eigen::Index ra = ds.nonsparse_count();
  state.omega0 = sol.xi.head(ra);
  state.alpha0 = sol.xi[ra];
  state.tau0 = sol.xi[ra + 1];
  if (sol.used_ridge) ++state.counters.ridge_retries;
}

void update_variance_components(const ClusteredDataset& ds, EcmState& state,
                                double trace_prev) {
  const Eigen::VectorXd eps = ds.y - ds.v * state.omega0 - state.alpha0 * state.wm.w0 -
                              state.tau0 * state.vbm;
  const double sigma2 =
      (trace_prev + eps.squaredNorm()) / static_cast<double>(ds.total_observations());
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw NumericalError("sigma2 update produced a non-positive value");
  }
  state.sigma2 = sigma2;
}

void refresh_b_and_cross(const ClusteredDataset& ds, EcmState& state) {
  state.psi = psi_blocks(ds, state.r_re, state.sigma2, state.g);
  state.counters.psi_ridge += state.psi.ridge_applied;
  const Eigen::VectorXd residual =
      ds.y - ds.v * state.omega0 - state.alpha0 * state.wm.w0;
  state.rem = b_moments(ds, state.r_re, state.psi, residual, state.sigma2);
  state.vbm = vb_mean(ds, state.r_re, state.rem);
  // E(W0 (V b)_j) = mean product plus the covariance induced by b's
  // dependence on W0 through the residual.  The same form serves both
  // E-cycles; evaluating it at the current (sigma2, G, b) keeps the Gram's
  // latent block consistent with the first moments even while the expanded
  // scale alpha0 is far from 1.
  state.cross.cross_wb = cross_moments(ds, state.r_re, state.psi, state.wm.var_w0) +
                         state.wm.w0.cwiseProduct(state.vbm);
  state.cross.vb_second =
      vb_second_moments(ds, state.r_re, state.psi, state.rem, state.sigma2);
}

}  // namespace

double EcmConfig::convergence_threshold() const {
  return convergence_lower_tail ? chi2_df1_lower_quantile(convergence_quantile)
                                : chi2_df1_upper_tail_quantile(convergence_quantile);
}

void EcmConfig::check() const {
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (!(convergence_quantile > 0.0 && convergence_quantile < 1.0)) {
    throw ConfigError("convergence_quantile must be in (0,1)");
  }
  if (!(storey_lambda > 0.0 && storey_lambda < 1.0)) {
    throw ConfigError("storey_lambda must be in (0,1)");
  }
  if (adjust_covariates < 0) throw ConfigError("adjust_covariates must be >= 0");
}

EcmState init_state(const ClusteredDataset& dataset, const EcmConfig& config) {
  config.check();
  const Eigen::Index p = dataset.predictor_count();
  const Eigen::Index ra = dataset.nonsparse_count();
  const Eigen::Index r_re = ra - config.adjust_covariates;
  if (r_re < 1) {
    throw ConfigError("adjust_covariates leaves no random-effect columns");
  }
  const Eigen::Index m_obs = dataset.total_observations();

  EcmState state;
  state.r_re = r_re;
  state.beta = Eigen::VectorXd::Zero(p);
  state.s2 = Eigen::VectorXd::Zero(p);
  state.probs = Eigen::VectorXd::Zero(p);
  state.omega0 = Eigen::VectorXd::Zero(ra);
  const double y_var = sample_variance(dataset.y);
  if (!(y_var > 0.0)) throw NumericalError("response has zero sample variance");
  state.sigma2 = y_var;
  state.g = Eigen::MatrixXd::Identity(r_re, r_re);
  state.wm.w0 = Eigen::VectorXd::Zero(m_obs);
  state.wm.var_w0 = Eigen::VectorXd::Zero(m_obs);
  state.wm.w0_sq = Eigen::VectorXd::Zero(m_obs);
  state.rem.b = Eigen::MatrixXd::Zero(dataset.cluster_count(), r_re);
  state.rem.b_cov.assign(static_cast<std::size_t>(dataset.cluster_count()),
                         Eigen::MatrixXd::Zero(r_re, r_re));
  state.rem.b_sq = state.rem.b_cov;
  state.cross.cross_wb = Eigen::VectorXd::Zero(m_obs);
  state.cross.vb_second = Eigen::VectorXd::Zero(m_obs);
  state.vbm = Eigen::VectorXd::Zero(m_obs);
  state.prev_w0 = Eigen::VectorXd::Zero(m_obs);
  state.prev_var_w0 = Eigen::VectorXd::Zero(m_obs);
  state.psi = psi_blocks(dataset, r_re, state.sigma2, state.g);
  state.loglik_trace.push_back(conditional_log_likelihood(dataset, state));
  return state;
}

PartitionSolution solve_partition(const ClusteredDataset& dataset, const EcmState& state,
                                  Eigen::Index k) {
  if (k < 0 || k >= dataset.predictor_count()) {
    throw DimensionError("solve_partition: predictor index out of range");
  }
  return assemble_and_solve(dataset, state, k, nullptr);
}

PartitionSolution solve_partition_zero(const ClusteredDataset& dataset, const EcmState& state) {
  return assemble_and_solve(dataset, state, std::nullopt, nullptr);
}

void m1_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config) {
  const Eigen::Index p = dataset.predictor_count();
  const double trace_prev = trace_term(dataset, state);

  state.m1_beta_hat = Eigen::VectorXd::Zero(p);
  state.m1_s2_hat = Eigen::VectorXd::Zero(p);
  state.m1_solved.assign(static_cast<std::size_t>(p), 0);
  Eigen::VectorXd sand00 = Eigen::VectorXd::Zero(p);
  PartitionSolution zero_solution;
  std::atomic<long> floored{0}, retried{0}, excluded{0};

  parallel_for(p + 1, config.workers, [&](Eigen::Index idx) {
    SolveExtras extras;
    if (idx == p) {
      zero_solution = assemble_and_solve(dataset, state, std::nullopt, &extras);
    } else {
      const PartitionSolution sol = assemble_and_solve(dataset, state, idx, &extras);
      if (sol.used_ridge) retried.fetch_add(1, std::memory_order_relaxed);
      if (sol.failed) {
        excluded.fetch_add(1, std::memory_order_relaxed);
      } else {
        state.m1_beta_hat[idx] = sol.xi[0];
        sand00[idx] = sol.sandwich(0, 0);
        state.m1_solved[static_cast<std::size_t>(idx)] = 1;
      }
    }
    floored.fetch_add(extras.floored, std::memory_order_relaxed);
  });
  state.counters.var_floor += floored.load();
  state.counters.ridge_retries += retried.load();
  state.counters.excluded += excluded.load();

  // G update; the all-zero average only occurs in the degenerate initial
  // state (zero-initialized b moments), where the previous G is retained.
  const Eigen::MatrixXd g_new = average_b_second_moments(state.rem);
  if (g_new.trace() > 0.0) state.g = g_new;

  apply_partition_zero(dataset, state, zero_solution);
  update_variance_components(dataset, state, trace_prev);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (state.m1_solved[static_cast<std::size_t>(k)]) {
      state.m1_s2_hat[k] = state.sigma2 * sand00[k];
    }
  }
}

void e1_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config) {
  const Eigen::Index p = dataset.predictor_count();
  const double q = config.q(state.t);

  for (Eigen::Index k = 0; k < p; ++k) {
    if (!state.m1_solved[static_cast<std::size_t>(k)]) continue;
    const double s2_hat = state.m1_s2_hat[k];
    if (!(s2_hat > 0.0)) continue;  // no usable posterior variance this round
    state.beta[k] = (1.0 - q) * state.beta[k] + q * state.m1_beta_hat[k];
    if (state.t <= 1 || !(state.s2[k] > 0.0)) {
      // First estimate for this coordinate: no previous precision to blend.
      state.s2[k] = s2_hat;
    } else {
      state.s2[k] = 1.0 / ((1.0 - q) / state.s2[k] + q / s2_hat);
    }
  }

  const TestStatistics stats = test_statistics(state.beta, state.s2);
  const Eigen::Index defined = stats.defined_count();
  if (defined >= 2) {
    state.pi0 = storey_pi0(stats.defined_pvalues(), config.storey_lambda);
    const MixtureDensityEstimate compact = kde(stats.defined_values());
    MixtureDensityEstimate full;
    full.bandwidth = compact.bandwidth;
    full.floor = compact.floor;
    full.evaluations = Eigen::VectorXd::Constant(p, compact.floor);
    Eigen::Index at = 0;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (stats.defined[static_cast<std::size_t>(k)]) full.evaluations[k] = compact.evaluations[at++];
    }
    state.probs = posterior_probs(stats, state.pi0, full);
  } else {
    state.pi0 = 1.0;
    state.probs.setZero();
  }

  state.wm = w_moments(dataset.x, state.beta, state.probs);
  refresh_b_and_cross(dataset, state);
}

void m2_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config) {
  (void)config;
  const double trace_prev = trace_term(dataset, state);
  const PartitionSolution sol = solve_partition_zero(dataset, state);
  const Eigen::MatrixXd g_new = average_b_second_moments(state.rem);
  if (g_new.trace() > 0.0) state.g = g_new;
  apply_partition_zero(dataset, state, sol);
  update_variance_components(dataset, state, trace_prev);
}

double e2_step(const ClusteredDataset& dataset, EcmState& state, const EcmConfig& config) {
  // W moments carry over from E1 unchanged; b, cross, and second moments are
  // refreshed at the M2 parameter values.
  refresh_b_and_cross(dataset, state);
  const auto [cc, converged] =
      convergence_check(state.wm.w0, state.prev_w0, state.prev_var_w0,
                        dataset.total_observations(), config.convergence_threshold());
  (void)converged;
  state.cc_trace.push_back(cc);
  state.loglik_trace.push_back(conditional_log_likelihood(dataset, state));
  state.prev_w0 = state.wm.w0;
  state.prev_var_w0 = state.wm.var_w0;
  return cc;
}

std::pair<double, bool> convergence_check(const Eigen::VectorXd& w0,
                                          const Eigen::VectorXd& prev_w0,
                                          const Eigen::VectorXd& prev_var_w0, Eigen::Index m,
                                          double threshold) {
  double max_change = 0.0;
  for (Eigen::Index j = 0; j < w0.size(); ++j) {
    const double delta = w0[j] - prev_w0[j];
    double c_j;
    if (prev_var_w0[j] > 0.0) {
      c_j = delta * delta / prev_var_w0[j];
    } else {
      c_j = (delta == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    if (c_j > max_change) max_change = c_j;
  }
  const double cc = std::log(static_cast<double>(m)) * max_change;
  return {cc, cc < threshold};
}

double conditional_log_likelihood(const ClusteredDataset& dataset, const EcmState& state) {
  if (!(state.sigma2 > 0.0)) {
    throw NumericalError("conditional log-likelihood requires sigma2 > 0");
  }
  const Eigen::VectorXd fitted =
      state.alpha0 * state.wm.w0 + dataset.v * state.omega0 + state.vbm;
  const double rss = (dataset.y - fitted).squaredNorm();
  const double m = static_cast<double>(dataset.total_observations());
  return -0.5 * m * std::log(state.sigma2) - 0.5 * rss / state.sigma2;
}

FitResult fit(const ClusteredDataset& dataset, const EcmConfig& config) {
  config.check();
  const auto diagnostics = validate(dataset);
  for (const auto& diag : diagnostics) {
    if (diag.fatal) throw DataError("dataset failed validation: " + diag.message);
  }

  EcmState state = init_state(dataset, config);
  const double threshold = config.convergence_threshold();
  bool converged = false;
  bool all_null = false;
  for (long t = 1; t <= config.max_iterations; ++t) {
    state.t = t;
    m1_step(dataset, state, config);
    e1_step(dataset, state, config);
    m2_step(dataset, state, config);
    const double cc = e2_step(dataset, state, config);
    if (cc < threshold) {
      converged = true;
      break;
    }
    if (state.probs.size() > 0 && !(state.probs.maxCoeff() > 0.0)) {
      // Loop guard: every inclusion probability hit zero, nothing left to move.
      converged = true;
      all_null = true;
      state.all_null_stop = true;
      break;
    }
  }

  FitResult result;
  result.beta_bar = state.alpha0 * state.probs.cwiseProduct(state.beta);
  for (Eigen::Index k = 0; k < state.probs.size(); ++k) {
    if (state.probs[k] > 0.5) result.selected.push_back(k);
  }
  result.converged = converged;
  result.all_null = all_null;
  result.iterations = state.t;
  result.standardized_fit = dataset.standardization.has_value();
  result.standardization = dataset.standardization;
  result.state = std::move(state);
  return result;
}

}  // namespace lmmprobe
