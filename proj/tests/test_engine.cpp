#include <gtest/gtest.h>

#include <random>

#include "pauction/clearing.hpp"
#include "pauction/engine.hpp"
#include "pauction/normal.hpp"

using namespace pauction;

namespace {

AuctionParams apple() { return AuctionParams::make(10, 1.0, 10.0, 1.76, 184.39, 184.39, 4.0, 0.0039); }

class FixedPolicy : public PricePolicy {
 public:
  explicit FixedPolicy(double mu) : mu_(mu) {}
  double mu_hat(const InformationSet&, double) const override { return mu_; }

 private:
  double mu_;
};

}  // namespace

TEST(ArrivalMeasure, ZeroFee) {
  const auto m = arrival_measure(apple(), FeeSchedule::zero());
  ASSERT_EQ(m.per_step_mean.size(), 10u);
  for (double x : m.per_step_mean) EXPECT_DOUBLE_EQ(x, 1.0);
  EXPECT_DOUBLE_EQ(m.cumulative(3, 10), 7.0);
}

TEST(ArrivalMeasure, FeeDistorted) {
  EXPECT_NEAR(arrival_measure(apple(), FeeSchedule::linear(0.1)).per_step_mean[2], 0.740818, 1e-6);
  EXPECT_NEAR(arrival_measure(apple(), FeeSchedule::square(0.24)).per_step_mean[9], 3.78e-11, 1e-13);
  auto p = apple();
  p.lambda = 2.5;
  EXPECT_NEAR(arrival_measure(p, FeeSchedule::linear(0.1)).per_step_mean[0], 2.5 * std::exp(-0.1),
              1e-15);
}

TEST(PoissonCountPmf, Values) {
  const auto m = arrival_measure(apple(), FeeSchedule::zero());
  EXPECT_NEAR(poisson_count_pmf(m, 4, 5, 0), 0.367879, 1e-6);
  EXPECT_DOUBLE_EQ(poisson_count_pmf(m, 5, 5, 0), 1.0);
  EXPECT_DOUBLE_EQ(poisson_count_pmf(m, 5, 5, 3), 0.0);
  EXPECT_THROW(poisson_count_pmf(m, 1, 2, -1), ValidationError);
  EXPECT_THROW(poisson_count_pmf(m, 3, 2, 0), ValidationError);
}

TEST(PoissonUpper, TruncationMass) {
  for (double mean : {0.0, 0.3, 1.0, 7.0, 25.0}) {
    for (double eps : {1e-4, 1e-10}) {
      const int M = numeric::poisson_upper(mean, eps);
      double mass = 0.0;
      for (int m = 0; m <= M; ++m) mass += numeric::poisson_pmf(mean, m);
      EXPECT_GE(mass, 1.0 - eps);
      if (M > 0) EXPECT_LT(mass - numeric::poisson_pmf(mean, M), 1.0 - eps);
    }
  }
}

TEST(GaussHermite, Moments) {
  const auto& r = numeric::gauss_hermite(12);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double x = r.nodes[i];
    m0 += r.weights[i];
    m2 += r.weights[i] * x * x;
    m4 += r.weights[i] * std::pow(x, 4);
    m6 += r.weights[i] * std::pow(x, 6);
  }
  EXPECT_NEAR(m0, 1.0, 1e-13);
  EXPECT_NEAR(m2, 1.0, 1e-12);
  EXPECT_NEAR(m4, 3.0, 1e-11);
  EXPECT_NEAR(m6, 15.0, 1e-10);
}

TEST(NormalCdfPdf, MatchesErfc) {
  for (double z = -9.0; z <= 9.0; z += 0.0137) {
    const auto v = numeric::normal_cdf_pdf(z);
    EXPECT_NEAR(v.cdf, numeric::normal_cdf(z), 1e-13);
    EXPECT_NEAR(v.pdf, numeric::normal_pdf(z), 1e-13);
  }
}

TEST(EstimatorConfig, Validation) {
  EstimatorConfig c;
  EXPECT_NO_THROW(validate(c));
  c.nodes = 1;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.paths = 0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.poisson_tail_eps = 1.0;
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(RunningStat, MergeMatchesSequential) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(3.0, 2.0);
  RunningStat all, a, b;
  for (int i = 0; i < 1000; ++i) {
    const double x = n(rng);
    all.add(x);
    (i < 400 ? a : b).add(x);
  }
  a.merge(b);
  EXPECT_EQ(a.count(), all.count());
  EXPECT_NEAR(a.mean(), all.mean(), 1e-12);
  EXPECT_NEAR(a.variance(), all.variance(), 1e-10);
  EXPECT_EQ(a.min(), all.min());
  EXPECT_EQ(a.max(), all.max());
}

TEST(Streams, IndependentAndStable) {
  auto a = make_stream(1, 5, Stream::arrivals);
  auto b = make_stream(1, 5, Stream::arrivals);
  auto c = make_stream(1, 5, Stream::mm_prices);
  auto d = make_stream(1, 6, Stream::arrivals);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(100, 4,
                            [](std::size_t i) {
                              if (i == 57) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(SamplePath, Determinism) {
  const auto p = apple();
  FixedPolicy pol(184.0);
  const TraderPolicy tp{7, &pol};
  const auto a = sample_path(p, Beliefs::perfect(p), FeeSchedule::zero(), ClosingRule::deterministic(10),
                             tp, 42, 1234);
  const auto b = sample_path(p, Beliefs::perfect(p), FeeSchedule::zero(), ClosingRule::deterministic(10),
                             tp, 42, 1234);
  EXPECT_EQ(a.mm_prices, b.mm_prices);
  EXPECT_EQ(a.mm_arrival_times, b.mm_arrival_times);
  EXPECT_EQ(a.efficient_price, b.efficient_price);
  EXPECT_EQ(a.trader_price, b.trader_price);
  EXPECT_EQ(a.clearing_price, b.clearing_price);
  EXPECT_EQ(a.closing_time, 10);
}

TEST(SamplePath, Invariants) {
  const auto p = apple();
  FixedPolicy pol(185.0);
  const auto rule = ClosingRule::bernoulli(9, 10, 0.5);
  int early = 0;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    const auto s = sample_path(p, Beliefs::perfect(p), FeeSchedule::zero(), rule, {10, &pol}, 9, i);
    ASSERT_EQ(s.mm_prices.size(), s.mm_arrival_times.size() + 1);
    for (double t : s.mm_arrival_times) {
      EXPECT_GT(t, 0.0);
      EXPECT_LE(t, s.closing_time);
    }
    early += s.closing_time == 9;
    if (s.executed) {
      EXPECT_LE(s.trader_price, s.clearing_price);
      EXPECT_LE(s.trader_arrival, s.closing_time);
    }
    if (s.closing_time < s.trader_arrival) {
      EXPECT_FALSE(s.executed);
      EXPECT_DOUBLE_EQ(s.clearing_price, clear_no_trader(s.mm_prices));
    } else {
      EXPECT_DOUBLE_EQ(s.clearing_price, clear(s.mm_prices, s.trader_price).price);
    }
  }
  EXPECT_NEAR(early / 2000.0, 0.5, 0.05);
}

TEST(SamplePath, DegenerateSigma) {
  auto p = apple();
  p.sigma *= 1e-9;
  FixedPolicy pol(1e6);  // never included
  const auto s =
      sample_path(p, Beliefs::perfect(p), FeeSchedule::zero(), ClosingRule::deterministic(10), {5, &pol}, 3, 0);
  EXPECT_NEAR(s.clearing_price, p.mu_mm, 1e-6);
}

TEST(ConditionalValue, ZeroWhenNeverIncluded) {
  const auto p = apple();
  const auto b = Beliefs::perfect(p);
  EstimatorConfig cfg;
  const InformationSet info{4, 3, 3 * 184.39};
  const double mu = b.mu_g_star + 18 * p.sigma;
  const auto v = conditional_value(info, mu, p, b, FeeSchedule::zero(), ClosingRule::deterministic(10), cfg);
  EXPECT_NEAR(v.value, 0.0, 1e-6 * p.K * p.sigma * p.sigma);
}

// With n = 1 at t = T and mu far below the resting order, inclusion is
// certain and the value has the closed form K E[(Pcl - P)(Pcl - P*)].
TEST(ConditionalValue, CertainInclusionClosedForm) {
  const auto p = AuctionParams::make(10, 1.0, 10.0, 1.76, 100.0, 100.0);
  const auto b = Beliefs::perfect(p);
  const InformationSet info{10, 1, 100.0};
  const double mu = 100.0 - 10 * p.sigma;
  // Pcl = (100 + P)/2, P ~ N(mu, s^2): Pcl - P = (100 - P)/2, Pcl - P* has P* ~ N(100, s^2) independent.
  const double s2 = p.sigma * p.sigma;
  const double e = (100.0 - mu) / 2;
  const double oracle = p.K * (e * ((100.0 + mu) / 2 - 100.0) - 0.25 * s2);
  EstimatorConfig quad;
  const auto q = conditional_value(info, mu, p, b, FeeSchedule::zero(), ClosingRule::deterministic(10), quad);
  EXPECT_NEAR(q.value, oracle, 1e-8 * std::abs(oracle));
  EstimatorConfig mc;
  mc.method = EstimatorMethod::monte_carlo;
  mc.paths = 200000;
  mc.seed = 11;
  const auto m = conditional_value(info, mu, p, b, FeeSchedule::zero(), ClosingRule::deterministic(10), mc);
  EXPECT_NEAR(m.value, oracle, 3 * m.stderr);
}

TEST(ConditionalValue, NodeDoublingIsStable) {
  const auto p = apple();
  const auto b = Beliefs::minus_sigma(p);
  const double scale = p.K * p.sigma * p.sigma;
  const InformationSet points[] = {{1, 1, 184.0}, {5, 4, 4 * 183.1}, {9, 10, 10 * 184.9}, {10, 12, 12 * 182.0}};
  for (const auto& info : points) {
    for (double mu : {178.0, 182.5, 184.39, 186.0}) {
      EstimatorConfig lo;
      lo.nodes = 48;
      EstimatorConfig hi;
      hi.nodes = 96;
      const auto rule = ClosingRule::bernoulli(9, 10, 0.2);
      const double a = conditional_value(info, mu, p, b, FeeSchedule::linear(0.01), rule, lo).value;
      const double c = conditional_value(info, mu, p, b, FeeSchedule::linear(0.01), rule, hi).value;
      EXPECT_LT(std::abs(a - c), 1e-6 * scale);
    }
  }
}

TEST(ConditionalValue, QuadratureAgreesWithMonteCarlo) {
  const auto p = apple();
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> t_dist(1, 10);
  std::uniform_int_distribution<int> n_dist(1, 12);
  std::normal_distribution<double> z;
  int agree = 0;
  const int cases = 20;
  for (int k = 0; k < cases; ++k) {
    const int t = t_dist(rng);
    const int n = n_dist(rng);
    const double sum = n * p.mu_mm + std::sqrt(n) * p.sigma * z(rng);
    const double mu = p.mu_star + 1.5 * p.sigma * z(rng);
    const auto b = k % 2 ? Beliefs::minus_sigma(p) : Beliefs::perfect(p);
    EstimatorConfig quad;
    EstimatorConfig mc;
    mc.method = EstimatorMethod::monte_carlo;
    mc.paths = 200000;
    mc.seed = 1000 + k;
    const auto q = conditional_value({t, n, sum}, mu, p, b, FeeSchedule::zero(), ClosingRule::deterministic(10), quad);
    const auto m = conditional_value({t, n, sum}, mu, p, b, FeeSchedule::zero(), ClosingRule::deterministic(10), mc);
    agree += std::abs(q.value - m.value) <= 3 * m.stderr + 1e-12;
  }
  EXPECT_GE(agree, 19);
}

TEST(ConditionalValue, ThreadCountInvariant) {
  const auto p = apple();
  EstimatorConfig mc;
  mc.method = EstimatorMethod::monte_carlo;
  mc.paths = 50000;
  mc.seed = 5;
  mc.threads = 1;
  const InformationSet info{6, 5, 5 * 184.0};
  const auto a = conditional_value(info, 184.0, p, Beliefs::perfect(p), FeeSchedule::zero(),
                                   ClosingRule::deterministic(10), mc);
  mc.threads = 3;
  const auto b = conditional_value(info, 184.0, p, Beliefs::perfect(p), FeeSchedule::zero(),
                                   ClosingRule::deterministic(10), mc);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.stderr, b.stderr);
}
