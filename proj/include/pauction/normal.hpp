#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace pauction::numeric {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

/// Tabulated standard normal cdf/pdf pair. Cubic Hermite interpolation on
/// |z| <= 7 (abs error ~1e-15); exact erfc/exp outside.
struct CdfPdf {
  double cdf;
  double pdf;
};
CdfPdf normal_cdf_pdf(double z);

/// Gauss-Hermite rule for E[f(Z)], Z ~ N(0, 1). Weights sum to 1.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Golub-Welsch on the probabilists' Hermite Jacobi matrix. Cached per n.
const GaussHermiteRule& gauss_hermite(int n);

/// Poisson(mean) pmf at m; pmf(0) = 1 when mean = 0.
double poisson_pmf(double mean, int m);

/// Smallest M with P(X <= M) >= 1 - tail_eps.
int poisson_upper(double mean, double tail_eps);

}  // namespace pauction::numeric
