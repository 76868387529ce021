#include <gtest/gtest.h>

#include <sstream>

#include "pauction/bilevel.hpp"
#include "pauction/quality.hpp"

using namespace pauction;

namespace {

AuctionParams apple() { return AuctionParams::make(10, 1.0, 10.0, 1.76, 184.39, 184.39, 4.0, 0.0039); }

EstimatorConfig quick(std::uint64_t seed, std::int64_t paths = 8000) {
  EstimatorConfig cfg;
  cfg.paths = paths;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(AverageFee, AllArrivals) {
  PathSample s;
  s.mm_prices = {1, 2, 3, 4};
  s.mm_arrival_times = {1, 2, 3};
  s.closing_time = 10;
  EXPECT_NEAR(average_fee(s, FeeSchedule::linear(0.1), FeeBase::all_arrivals), 0.15, 1e-15);
  EXPECT_EQ(average_fee(s, FeeSchedule::zero(), FeeBase::all_arrivals), 0.0);
}

TEST(AverageFee, StrategicOnly) {
  PathSample s;
  s.mm_prices = {1};
  s.closing_time = 10;
  s.trader_arrival = 5;
  EXPECT_NEAR(average_fee(s, FeeSchedule::square(0.01), FeeBase::strategic_only), 0.25, 1e-15);
  s.closing_time = 4;
  EXPECT_EQ(average_fee(s, FeeSchedule::square(0.01), FeeBase::strategic_only), 0.0);
}

TEST(ObjectiveSpec, Scores) {
  ObjectiveSpec ts;
  EXPECT_DOUBLE_EQ(ts.score(1.5, 0.5), 4.0);
  ts.rho = 0.5;
  EXPECT_DOUBLE_EQ(ts.score(1.5, 0.5), std::exp(1.0));
  ObjectiveSpec ef{ObjectiveKind::efficiency_minus_fee, std::nullopt, FeeBase::all_arrivals};
  EXPECT_DOUBLE_EQ(ef.score(2.0, 0.5), 3.5);
  ef.rho = 1.0;
  EXPECT_DOUBLE_EQ(ef.score(2.0, 0.5), std::exp(1.5));
  EXPECT_DOUBLE_EQ(ef.quality(2.0), std::exp(2.0));
  ObjectiveSpec bad;
  bad.rho = 0.0;
  EXPECT_THROW(validate(bad), ValidationError);
}

TEST(EvaluateMechanism, ZeroFeeCollapsesToMq) {
  const auto p = apple();
  const auto b = Beliefs::minus_sigma(p);
  const auto cfg = quick(31);
  const auto m = evaluate_mechanism(FeeSchedule::zero(), ClosingRule::deterministic(10), ObjectiveSpec{},
                                    p, b, cfg);
  const auto row = evaluate_quality(m.tau_hat, p, b, FeeSchedule::zero(), ClosingRule::deterministic(10),
                                    {}, cfg);
  EXPECT_EQ(m.exchange_value.value, row.mq.value);
  EXPECT_EQ(m.mq_with_fee.value, m.mq_zero_fee.value);
  EXPECT_DOUBLE_EQ(m.fee_gain, 0.0);
  EXPECT_EQ(m.fee_revenue.value, 0.0);
}

TEST(EvaluateMechanism, IcHoldsForReportedTau) {
  const auto p = apple();
  const auto m = evaluate_mechanism(FeeSchedule::square(0.003), ClosingRule::deterministic(10),
                                    ObjectiveSpec{}, p, Beliefs::minus_sigma(p), quick(5), {}, false);
  ASSERT_EQ(m.curve.points.size(), 10u);
  const auto& best = m.curve.points[m.tau_hat - 1];
  for (const auto& pt : m.curve.points) EXPECT_LE(pt.value, best.value);
}

TEST(EvaluateMechanism, MultiObjectiveMatchesSingle) {
  const auto p = apple();
  const auto b = Beliefs::minus_sigma(p);
  ObjectiveSpec a;
  ObjectiveSpec r{ObjectiveKind::efficiency_minus_fee, 0.5, FeeBase::all_arrivals};
  const auto both = evaluate_mechanism(FeeSchedule::linear(0.02), ClosingRule::deterministic(10),
                                       std::vector<ObjectiveSpec>{a, r}, p, b, quick(9));
  const auto one = evaluate_mechanism(FeeSchedule::linear(0.02), ClosingRule::deterministic(10), r, p, b,
                                      quick(9));
  EXPECT_EQ(both[1].exchange_value.value, one.exchange_value.value);
  EXPECT_EQ(both[1].mq_zero_fee.value, one.mq_zero_fee.value);
  EXPECT_DOUBLE_EQ(both[1].fee_gain, one.mq_with_fee.value - one.exchange_value.value);
}

TEST(ReservationHolds, Cases) {
  const auto p = apple();
  const auto b = Beliefs::minus_sigma(p);
  EXPECT_TRUE(reservation_holds(FeeSchedule::zero(), ClosingRule::deterministic(10), p, b, quick(3)));
  auto free = p;
  free.gamma = 0.0;
  EXPECT_TRUE(reservation_holds(FeeSchedule::linear(0.05), ClosingRule::deterministic(10), free, b, quick(3)));
  auto costly = p;
  costly.gamma = 50.0;
  EXPECT_FALSE(reservation_holds(FeeSchedule::zero(), ClosingRule::deterministic(10), costly, b, quick(3)));
}

TEST(ReservationHolds, ExtremeFeeFails) {
  const auto p = apple();
  EXPECT_FALSE(reservation_holds(FeeSchedule::square(100.0), ClosingRule::deterministic(10), p,
                                 Beliefs::minus_sigma(p), quick(3)));
}

TEST(OptimizeMechanism, SingleCandidate) {
  const auto p = apple();
  const auto s = optimize_mechanism(ObjectiveSpec{}, {FeeFamily::square}, {0.002}, {0.0}, p,
                                    Beliefs::minus_sigma(p), quick(4));
  ASSERT_EQ(s.sweep.size(), 1u);
  EXPECT_EQ(s.best.fee.family, FeeFamily::square);
  EXPECT_DOUBLE_EQ(s.best.fee.a, 0.002);
  EXPECT_TRUE(s.best.reservation_satisfied);
}

TEST(OptimizeMechanism, TiesPreferSmallerCoefficient) {
  // With a = 0 in the grid, linear and square give the same (zero) fee and an
  // identical simulation; linear must win, and a = 0 beats nothing else.
  const auto p = apple();
  const auto s = optimize_mechanism(ObjectiveSpec{}, {FeeFamily::square, FeeFamily::linear}, {0.0}, {0.0}, p,
                                    Beliefs::minus_sigma(p), quick(4, 4000));
  ASSERT_EQ(s.sweep.size(), 2u);
  EXPECT_EQ(s.sweep[0].exchange_value.value, s.sweep[1].exchange_value.value);
  EXPECT_EQ(s.best.fee.family, FeeFamily::linear);
}

TEST(OptimizeMechanism, InfeasibleNamesClosestCandidate) {
  auto p = apple();
  p.gamma = 1e3;
  try {
    optimize_mechanism(ObjectiveSpec{}, {FeeFamily::linear}, {0.0, 0.01}, {0.0}, p, Beliefs::minus_sigma(p),
                       quick(4, 2000));
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("infeasible"), std::string::npos);
    EXPECT_NE(msg.find("closest"), std::string::npos);
  }
}

TEST(OptimizeMechanism, RejectsEmptyGrids) {
  const auto p = apple();
  EXPECT_THROW(optimize_mechanism(ObjectiveSpec{}, {FeeFamily::linear}, {}, {0.0}, p, Beliefs::perfect(p),
                                  quick(1)),
               ValidationError);
}

TEST(MechanismCsv, OneRowPerCandidate) {
  MechanismResult m;
  m.fee = FeeSchedule::square(0.003);
  std::ostringstream os;
  write_csv(os, {m, m});
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_NE(text.find("square,0.003,"), std::string::npos);
}
