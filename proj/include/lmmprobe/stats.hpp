#pragma once

#include <Eigen/Core>

namespace lmmprobe {

double normal_pdf(double x);
double normal_cdf(double x);

// Inverse standard normal CDF (Wichura's PPND16 rational approximation,
// accurate to ~1e-15 over (0,1)).
double normal_quantile(double p);

// Two-sided tail probability of |Z| >= |t| under the standard normal.
double two_sided_pvalue(double t);

// Quantiles of the chi-square distribution with one degree of freedom,
// expressed through the normal quantile.  `upper_tail_quantile(c)` returns x
// with P(X > x) = c; `lower_quantile(c)` returns x with P(X <= x) = c.
double chi2_df1_upper_tail_quantile(double c);
double chi2_df1_lower_quantile(double c);

double sample_mean(const Eigen::VectorXd& x);
// Unbiased (n-1 denominator) sample variance / standard deviation.
double sample_variance(const Eigen::VectorXd& x);
double sample_sd(const Eigen::VectorXd& x);

// Median with even-length midpoint averaging.  Throws on empty input.
double median(Eigen::VectorXd x);

// Interquartile range using linear interpolation between order statistics.
double interquartile_range(Eigen::VectorXd x);

}  // namespace lmmprobe
