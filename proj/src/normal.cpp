#include "pauction/normal.hpp"

#include <array>
#include <map>
#include <memory>
#include <mutex>

#include <Eigen/Eigenvalues>

namespace pauction::numeric {

namespace {

constexpr double kTableLimit = 7.0;
constexpr int kStepsPerUnit = 512;
constexpr int kTableSize = static_cast<int>(2 * kTableLimit * kStepsPerUnit) + 1;

struct CdfTable {
  std::vector<double> cdf;
  std::vector<double> pdf;
  CdfTable() : cdf(kTableSize), pdf(kTableSize) {
    for (int i = 0; i < kTableSize; ++i) {
      const double z = -kTableLimit + static_cast<double>(i) / kStepsPerUnit;
      cdf[i] = normal_cdf(z);
      pdf[i] = normal_pdf(z);
    }
  }
};

const CdfTable& table() {
  static const CdfTable t;
  return t;
}

}  // namespace

CdfPdf normal_cdf_pdf(double z) {
  if (!(z > -kTableLimit && z < kTableLimit)) return {normal_cdf(z), normal_pdf(z)};
  const CdfTable& t = table();
  constexpr double h = 1.0 / kStepsPerUnit;
  const double x = (z + kTableLimit) * kStepsPerUnit;
  int i = static_cast<int>(x);
  if (i >= kTableSize - 1) i = kTableSize - 2;
  const double u = x - i;
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double h00 = 2 * u3 - 3 * u2 + 1;
  const double h10 = u3 - 2 * u2 + u;
  const double h01 = -2 * u3 + 3 * u2;
  const double h11 = u3 - u2;
  const double z0 = -kTableLimit + i * h;
  const double z1 = z0 + h;
  const double f0 = t.pdf[i];
  const double f1 = t.pdf[i + 1];
  // cdf' = pdf; pdf' = -z pdf
  const double cdf = h00 * t.cdf[i] + h10 * h * f0 + h01 * t.cdf[i + 1] + h11 * h * f1;
  const double pdf = h00 * f0 + h10 * h * (-z0 * f0) + h01 * f1 + h11 * h * (-z1 * f1);
  return {cdf, pdf};
}

const GaussHermiteRule& gauss_hermite(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
      jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
      jacobi(k - 1, k) = jacobi(k, k - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    auto rule = std::make_unique<GaussHermiteRule>();
    rule->nodes.resize(n);
    rule->weights.resize(n);
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
      rule->nodes[k] = solver.eigenvalues()(k);
      const double v0 = solver.eigenvectors()(0, k);
      rule->weights[k] = v0 * v0;
      total += rule->weights[k];
    }
    for (double& w : rule->weights) w /= total;
    // symmetrize away eigen-solver noise
    for (int k = 0; k < n / 2; ++k) {
      const double x = 0.5 * (rule->nodes[n - 1 - k] - rule->nodes[k]);
      const double w = 0.5 * (rule->weights[k] + rule->weights[n - 1 - k]);
      rule->nodes[k] = -x;
      rule->nodes[n - 1 - k] = x;
      rule->weights[k] = rule->weights[n - 1 - k] = w;
    }
    if (n % 2 == 1) rule->nodes[n / 2] = 0.0;
    slot = std::move(rule);
  }
  return *slot;
}

double poisson_pmf(double mean, int m) {
  if (m < 0) return 0.0;
  if (mean <= 0.0) return m == 0 ? 1.0 : 0.0;
  return std::exp(m * std::log(mean) - mean - std::lgamma(m + 1.0));
}

int poisson_upper(double mean, double tail_eps) {
  if (mean <= 0.0) return 0;
  double cdf = 0.0;
  int m = 0;
  for (;; ++m) {
    cdf += poisson_pmf(mean, m);
    if (1.0 - cdf < tail_eps) return m;
    if (m > 100000) return m;
  }
}

}  // namespace pauction::numeric
