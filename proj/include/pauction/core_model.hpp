#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pauction {

/// Raised when an input object violates one of its invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an input file cannot be read or an output cannot be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Market constants for one auction. Prices are in currency units, K in
/// shares per currency unit, lambda in arrivals per unit time.
struct AuctionParams {
  int horizon{10};  // T
  double lambda{1.0};
  double K{10.0};
  double sigma{1.0};
  double mu_star{0.0};
  double mu_mm{0.0};
  double mu_bound_width{4.0};  // half-width of the mu-hat search interval, in sigmas
  double gamma{0.0};           // bid-ask spread estimate used by the reservation constraint
  std::vector<int> time_grid;  // trader decision times; {1..T} when built by make()

  /// Parameters with the default decision grid {1..T}.
  static AuctionParams make(int horizon, double lambda, double K, double sigma, double mu_star,
                            double mu_mm, double mu_bound_width = 4.0, double gamma = 0.0);

  int n_max() const;  // ceil(lambda*T + 6*sqrt(lambda*T))
};

/// Throws ValidationError naming the first violated field.
void validate(const AuctionParams& params);

/// The strategic trader's conjectured means; they define the measure E_g.
struct Beliefs {
  double mu_g_star{0.0};
  double mu_g_mm{0.0};

  static Beliefs perfect(const AuctionParams& p) { return {p.mu_star, p.mu_mm}; }
  static Beliefs minus_sigma(const AuctionParams& p) {
    return {p.mu_star - p.sigma, p.mu_mm - p.sigma};
  }
  static Beliefs plus_sigma(const AuctionParams& p) {
    return {p.mu_star + p.sigma, p.mu_mm + p.sigma};
  }

  bool is_perfect(const AuctionParams& p) const {
    return mu_g_star == p.mu_star && mu_g_mm == p.mu_mm;
  }
};

enum class FeeFamily { zero, linear, square };

std::string_view to_string(FeeFamily f);

/// Per-share fee charged to a participant arriving in step (t-1, t].
struct FeeSchedule {
  FeeFamily family{FeeFamily::zero};
  double a{0.0};

  static FeeSchedule zero() { return {}; }
  static FeeSchedule linear(double a) { return {FeeFamily::linear, a}; }
  static FeeSchedule square(double a) { return {FeeFamily::square, a}; }

  /// Parses "zero", "linear:0.01" or "square:0.24".
  static FeeSchedule parse(std::string_view spec);

  double eval(double t) const {
    switch (family) {
      case FeeFamily::zero:
        return 0.0;
      case FeeFamily::linear:
        return a * t;
      case FeeFamily::square:
        return a * t * t;
    }
    return 0.0;
  }

  bool is_zero() const { return family == FeeFamily::zero || a == 0.0; }
  std::string to_string() const;
};

void validate(const FeeSchedule& fee);

/// Law of the auction's closing time.
struct ClosingRule {
  std::vector<int> support;
  std::vector<double> probs;

  static ClosingRule deterministic(int t) { return {{t}, {1.0}}; }
  /// P(close = early) = p, P(close = late) = 1 - p.
  static ClosingRule bernoulli(int early, int late, double p);
  /// Parses "close=<t>" or "p=<x>" (two-point law on {T-1, T}).
  static ClosingRule parse(std::string_view spec, int horizon);

  /// P(close >= t).
  double survival(int t) const;
  int latest() const;
  std::string to_string() const;
};

void validate(const ClosingRule& rule, const AuctionParams& params);

/// Sufficient statistic of the trader's filtration at time t.
struct InformationSet {
  int t{0};
  int n{1};
  double sum_prices{0.0};
};

void validate(const InformationSet& info);

/// One simulated auction realization.
struct PathSample {
  std::vector<double> mm_arrival_times;  // step index of each arrival after time 0
  std::vector<double> mm_prices;         // [0] is the resting order present at time 0
  double efficient_price{0.0};
  int closing_time{0};
  int trader_arrival{0};
  double trader_mu_hat{0.0};
  double trader_price{0.0};
  double clearing_price{0.0};
  bool executed{false};
};

// JSON interchange. Field names: T, lambda, K, sigma, mu_star, mu_mm,
// mu_bound_width, gamma, time_grid.
void to_json(nlohmann::json& j, const AuctionParams& p);
void from_json(const nlohmann::json& j, AuctionParams& p);
void to_json(nlohmann::json& j, const Beliefs& b);
void from_json(const nlohmann::json& j, Beliefs& b);
void to_json(nlohmann::json& j, const FeeSchedule& f);
void from_json(const nlohmann::json& j, FeeSchedule& f);
void to_json(nlohmann::json& j, const ClosingRule& c);
void from_json(const nlohmann::json& j, ClosingRule& c);

}  // namespace pauction
