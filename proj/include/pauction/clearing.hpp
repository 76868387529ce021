#pragma once

#include <optional>
#include <span>

namespace pauction {

struct ClearingOutcome {
  double price{0.0};
  bool trader_included{false};
};

/// Uniform clearing price with market makers only: the mean limit price.
double clear_no_trader(std::span<const double> prices);

/// Volume-maximizing clearing with a strategic seller. The seller is included
/// iff mean(prices) > trader_price; a tie excludes it.
ClearingOutcome clear(std::span<const double> prices, double trader_price);

/// Sum-based form of clear() for callers that only track (n, sum).
inline ClearingOutcome clear_from_sum(int n, double sum_prices, double trader_price) {
  const double mean = sum_prices / n;
  if (mean > trader_price) return {(sum_prices + trader_price) / (n + 1), true};
  return {mean, false};
}

/// Executed volume min(buy, sell) if the auction cleared at `candidate`.
/// Brute-force reference for the clearing rule.
double executed_volume(std::span<const double> prices, std::optional<double> trader_price,
                       double candidate, double K);

/// Seller payoff K(Pcl - P)(Pcl - P*) - K(Pcl - P) * fee when executed, else 0.
double trader_payoff(const ClearingOutcome& outcome, double trader_price,
                     double efficient_price, double K, double fee_at_arrival);

}  // namespace pauction
