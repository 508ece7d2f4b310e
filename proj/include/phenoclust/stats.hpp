#pragma once

#include <span>
#include <vector>

namespace phenoclust {

/// Percentile of already sorted values with linear interpolation between
/// closest ranks: h = (n - 1) q, result = x[floor(h)] + frac(h) (x[floor(h)+1] - x[floor(h)]).
/// `q` is a fraction in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

/// Same as percentile_sorted but sorts a copy first.
double percentile(std::span<const double> values, double q);

/// Upper tail of the chi-square distribution, P(X > x) for X ~ chi2(df),
/// via the regularized upper incomplete gamma function.
double chi2_survival(double x, double df);

/// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

/// Two-sided normal p-value for a z statistic.
double normal_two_sided_p(double z);

}  // namespace phenoclust
