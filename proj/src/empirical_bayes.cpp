#include "lmmprobe/empirical_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmmprobe/errors.hpp"
#include "lmmprobe/matdim.hpp"
#include "lmmprobe/stats.hpp"

namespace lmmprobe {

namespace {
constexpr double kDensityFloor = 1e-10;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
// Kernel contributions beyond this many bandwidths are below 1e-15 relative
// and are skipped by the windowed summation.
constexpr double kKernelCutoff = 8.5;
}  // namespace

Eigen::Index TestStatistics::defined_count() const {
  return static_cast<Eigen::Index>(std::count(defined.begin(), defined.end(), 1));
}

Eigen::VectorXd TestStatistics::defined_values() const {
  Eigen::VectorXd out(defined_count());
  Eigen::Index at = 0;
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    if (defined[static_cast<std::size_t>(k)]) out[at++] = t[k];
  }
  return out;
}

Eigen::VectorXd TestStatistics::defined_pvalues() const {
  Eigen::VectorXd out(defined_count());
  Eigen::Index at = 0;
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    if (defined[static_cast<std::size_t>(k)]) out[at++] = pvalues[k];
  }
  return out;
}

TestStatistics test_statistics(const Eigen::VectorXd& beta, const Eigen::VectorXd& s2) {
  if (beta.size() != s2.size()) {
    throw DimensionError("test_statistics: beta and s2 lengths differ");
  }
  const Eigen::Index p = beta.size();
  TestStatistics stats;
  stats.t = Eigen::VectorXd::Zero(p);
  stats.pvalues = Eigen::VectorXd::Ones(p);
  stats.defined.assign(static_cast<std::size_t>(p), 0);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (s2[k] > 0.0 && std::isfinite(s2[k])) {
      stats.t[k] = beta[k] / std::sqrt(s2[k]);
      stats.pvalues[k] = two_sided_pvalue(stats.t[k]);
      stats.defined[static_cast<std::size_t>(k)] = 1;
    }
  }
  return stats;
}

double storey_pi0(const Eigen::VectorXd& pvalues, double lambda) {
  const Eigen::Index p = pvalues.size();
  if (p == 0) throw NumericalError("storey_pi0: empty p-value vector");
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("storey_pi0: lambda outside (0,1)");
  const double tail = static_cast<double>((pvalues.array() >= lambda).count());
  const double raw = tail / (static_cast<double>(p) * (1.0 - lambda));
  const double lower = 1.0 / static_cast<double>(p);
  return std::min(1.0, std::max(lower, raw));
}

double silverman_bandwidth(const Eigen::VectorXd& t) {
  const Eigen::Index n = t.size();
  if (n < 2) throw NumericalError("silverman_bandwidth: need at least 2 statistics");
  const double sd = sample_sd(t);
  const double iqr = interquartile_range(t);
  const double spread = std::min(sd, iqr / 1.34);
  if (spread > 0.0 && std::isfinite(spread)) {
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  }
  return 1e-3 * std::max(1.0, std::abs(t[0]));
}

double kde_evaluate(const Eigen::VectorXd& centers, double bandwidth, double x) {
  const Eigen::Index n = centers.size();
  double sum = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double u = (x - centers[k]) / bandwidth;
    sum += std::exp(-0.5 * u * u);
  }
  return kInvSqrt2Pi * sum / (static_cast<double>(n) * bandwidth);
}

MixtureDensityEstimate kde(const Eigen::VectorXd& t) {
  const Eigen::Index n = t.size();
  if (n < 2) throw NumericalError("kde: need at least 2 statistics");
  matdim::record(n, 1);
  const double h = silverman_bandwidth(t);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return t[a] < t[b]; });
  Eigen::VectorXd sorted(n);
  for (Eigen::Index i = 0; i < n; ++i) sorted[i] = t[order[static_cast<std::size_t>(i)]];

  const double cutoff = kKernelCutoff * h;
  MixtureDensityEstimate out;
  out.bandwidth = h;
  out.floor = kDensityFloor;
  out.evaluations.resize(n);
  Eigen::Index lo = 0, hi = 0;
  const double norm = kInvSqrt2Pi / (static_cast<double>(n) * h);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = sorted[i];
    while (lo < n && sorted[lo] < x - cutoff) ++lo;
    if (hi < i + 1) hi = i + 1;
    while (hi < n && sorted[hi] <= x + cutoff) ++hi;
    double sum = 0.0;
    for (Eigen::Index k = lo; k < hi; ++k) {
      const double u = (x - sorted[k]) / h;
      sum += std::exp(-0.5 * u * u);
    }
    out.evaluations[order[static_cast<std::size_t>(i)]] = std::max(norm * sum, kDensityFloor);
  }
  return out;
}

Eigen::VectorXd posterior_probs(const TestStatistics& stats, double pi0,
                                const MixtureDensityEstimate& density) {
  const Eigen::Index p = stats.t.size();
  if (density.evaluations.size() != p) {
    throw DimensionError("posterior_probs: density evaluations do not align with statistics");
  }
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!stats.defined[static_cast<std::size_t>(k)]) continue;
    const double fhat = std::max(density.evaluations[k], density.floor);
    const double value = 1.0 - pi0 * normal_pdf(stats.t[k]) / fhat;
    probs[k] = std::min(1.0, std::max(0.0, value));
  }
  return probs;
}

}  // namespace lmmprobe
