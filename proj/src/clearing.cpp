#include "pauction/clearing.hpp"

#include <algorithm>
#include <cmath>

#include "pauction/core_model.hpp"

namespace pauction {

namespace {

double checked_sum(std::span<const double> prices) {
  if (prices.empty()) throw ValidationError("clearing needs at least one limit price");
  double s = 0.0;
  for (double p : prices) s += p;
  return s;
}

}  // namespace

double clear_no_trader(std::span<const double> prices) {
  return checked_sum(prices) / static_cast<double>(prices.size());
}

ClearingOutcome clear(std::span<const double> prices, double trader_price) {
  const double sum = checked_sum(prices);
  return clear_from_sum(static_cast<int>(prices.size()), sum, trader_price);
}

double executed_volume(std::span<const double> prices, std::optional<double> trader_price,
                       double candidate, double K) {
  if (!(K > 0.0)) throw ValidationError("K must be positive");
  double buy = 0.0;
  double sell = 0.0;
  for (double p : prices) {
    if (p > candidate) buy += K * (p - candidate);
    if (p < candidate) sell += K * (candidate - p);
  }
  if (trader_price && candidate >= *trader_price) sell += K * (candidate - *trader_price);
  return std::min(buy, sell);
}

double trader_payoff(const ClearingOutcome& outcome, double trader_price,
                     double efficient_price, double K, double fee_at_arrival) {
  if (!outcome.trader_included || trader_price > outcome.price) return 0.0;
  const double volume = K * (outcome.price - trader_price);
  return volume * (outcome.price - efficient_price) - volume * fee_at_arrival;
}

}  // namespace pauction
