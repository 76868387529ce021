#pragma once

#include <functional>
#include <vector>

#include "pauction/engine.hpp"

namespace pauction {

/// Per-path, per-arrival-time quantities produced by simulate(). Scoring
/// fields use the true means; belief_* fields use the trader's beliefs on the
/// same standard-normal draws.
struct PathOutcome {
  int tau{0};
  int closing{0};
  bool arrived{false};
  double efficient_price{0.0};
  double no_trader_price{0.0};
  double clearing_price{0.0};
  double mu_hat{0.0};
  double trader_price{0.0};
  bool executed{false};
  double avg_fee_all{0.0};
  double avg_fee_strategic{0.0};
  double belief_payoff{0.0};
  double belief_volume{0.0};
};

using PathScorer = std::function<double(const PathOutcome&)>;

struct SimulationSpec {
  AuctionParams params;
  Beliefs beliefs;
  FeeSchedule fee;
  ClosingRule closing;
  const PricePolicy* policy{nullptr};  // nullptr: no strategic trader
  std::vector<int> taus;
  bool score_beliefs{true};
  std::int64_t paths{200000};
  std::uint64_t seed{0};
  int threads{0};
};

struct TauSummary {
  int tau{0};
  RunningStat trader_value;   // belief measure, fee included
  RunningStat trader_volume;  // belief measure, K (Pcl - P) when executed
  RunningStat mq;             // (Pcl - P*)^2
  RunningStat price_impact;   // (Pcl,0 - Pcl)^2
  RunningStat mu_hat;         // true-measure mu-hat, arrived paths only
  RunningStat fee_all;
  RunningStat fee_strategic;
  std::vector<RunningStat> extra;  // one per scorer
};

/// One Monte Carlo pass shared by every arrival time in spec.taus. Path j uses
/// streams derived from (seed, j), so each tau sees the same market and the
/// trader-price shock is common across taus. Blocks of kPathsPerBlock paths
/// are reduced in block order, which makes the result independent of threads.
std::vector<TauSummary> simulate(const SimulationSpec& spec,
                                 const std::vector<PathScorer>& scorers = {});

}  // namespace pauction
