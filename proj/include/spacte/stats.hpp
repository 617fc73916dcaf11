#ifndef SPACTE_STATS_HPP
#define SPACTE_STATS_HPP

namespace spacte {

// Standard normal CDF via erfc; accurate in both tails.
double normal_cdf(double x);

// Standard normal quantile: rational initial guess refined with Newton
// steps against erfc. Absolute error below 1e-9 over p in [1e-12, 1-1e-12].
double normal_quantile(double p);

// Regularized incomplete beta function I_x(a, b), continued fraction.
double betainc(double a, double b, double x);

// Exact one-sided Clopper-Pearson lower confidence bound: the alpha-quantile
// of Beta(k, n-k+1). k = 0 -> 0; k = n -> alpha^(1/n).
double lower_conf_bound(long long k, long long n, double alpha);

// Two-sided p-value of the binomial test for k successes in n trials at
// success probability p.
double binomial_two_sided_p(long long k, long long n, double p);

}  // namespace spacte

#endif  // SPACTE_STATS_HPP
