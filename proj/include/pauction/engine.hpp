#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "pauction/core_model.hpp"

namespace pauction {

/// Expected market-maker arrivals per step (t-1, t], t = 1..T, under a fee.
struct ArrivalMeasure {
  std::vector<double> per_step_mean;  // index t-1

  /// Expected arrivals in (from_t, to_t].
  double cumulative(int from_t, int to_t) const;
};

ArrivalMeasure arrival_measure(const AuctionParams& params, const FeeSchedule& fee);

/// P(N_{to_t} - N_{from_t} = m).
double poisson_count_pmf(const ArrivalMeasure& measure, int from_t, int to_t, int m);

enum class EstimatorMethod { monte_carlo, quadrature };

struct EstimatorConfig {
  EstimatorMethod method{EstimatorMethod::quadrature};
  std::int64_t paths{200000};
  int nodes{48};
  double poisson_tail_eps{1e-10};
  std::uint64_t seed{0};
  int threads{0};  // 0: hardware concurrency
};

void validate(const EstimatorConfig& cfg);
void to_json(nlohmann::json& j, const EstimatorConfig& c);
void from_json(const nlohmann::json& j, EstimatorConfig& c);

struct Estimate {
  double value{0.0};
  double stderr{0.0};
};

/// Streaming mean/variance (Welford) with an order-fixed merge.
class RunningStat {
 public:
  void add(double x) {
    if (n_ == 0 || x < min_) min_ = x;
    if (n_ == 0 || x > max_) max_ = x;
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  void merge(const RunningStat& o);

  std::int64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }
  double min() const { return min_; }
  double max() const { return max_; }
  Estimate estimate() const { return {mean(), stderr()}; }

 private:
  std::int64_t n_{0};
  double min_{0.0};
  double max_{0.0};
  double mean_{0.0};
  double m2_{0.0};
};

int resolve_threads(int requested);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
/// claimed dynamically, so fn must write only to slot i.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// Paths per reduction block; fixed so that results do not depend on the
/// number of workers.
inline constexpr std::int64_t kPathsPerBlock = 1024;

// --- random streams -------------------------------------------------------

/// SplitMix64 as a UniformRandomBitGenerator; seeded in O(1) so every
/// (seed, path, stream) triple gets its own generator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

enum class Stream : std::uint64_t {
  arrivals = 1,
  mm_prices = 2,
  efficient_price = 3,
  closing = 4,
  trader_price = 5,
  conditional = 6,
};

SplitMix64 make_stream(std::uint64_t seed, std::uint64_t path_index, Stream stream);

// --- policies -------------------------------------------------------------

/// Maps the trader's information at arrival to the mean of the submitted
/// price. `efficient_price` is read only by full-information policies.
class PricePolicy {
 public:
  virtual ~PricePolicy() = default;
  virtual double mu_hat(const InformationSet& info, double efficient_price) const = 0;
};

struct TraderPolicy {
  int arrival{0};
  const PricePolicy* policy{nullptr};
};

// --- standardized objective ----------------------------------------------

/// Model constants in units where a price P reads (P - mu_g_mm) / sigma and a
/// payoff reads payoff / (K sigma^2). The trader's argmax is invariant under
/// this change of units, so one table serves every (mu, sigma) with the same
/// standardized inputs.
struct StandardModel {
  int horizon{0};
  std::vector<double> rate;  // expected arrivals in step t, index t-1
  std::vector<double> fee;   // xi(t) / sigma, index t-1
  ClosingRule closing;
  double x_offset{0.0};  // (mu_g_star - mu_g_mm) / sigma
  double bound_width{4.0};

  static StandardModel make(const AuctionParams& params, const Beliefs& beliefs,
                            const FeeSchedule& fee, const ClosingRule& closing);
  double fee_at(int t) const { return t >= 1 && t <= horizon ? fee[t - 1] : 0.0; }
  nlohmann::json key() const;
};

/// E_g[1{p <= Pcl} (Pcl - p)(Pcl - P* - xi(t)) | F_t, close >= t] in standard
/// units, as a function of the trader's mean mu. The trader price is
/// integrated in closed form, P* enters through its mean, and the sum of
/// future market-maker prices is integrated by Gauss-Hermite inside a
/// truncated Poisson mixture over the number of future arrivals.
class ObjectiveKernel {
 public:
  /// `x_mean` is the standardized mean of P* (or its known value) plus the
  /// standardized fee at t.
  ObjectiveKernel(const StandardModel& model, int t, int n, double sum_std, double x_mean,
                  int nodes, double tail_eps);

  double operator()(double mu) const;
  bool empty() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }

 private:
  struct Term {
    double c;   // mean of all market-maker prices in the scenario
    double b1;  // weight * N (c - x) / (N + 1)
    double b2;  // weight * N / (N + 1)^2
  };
  std::vector<Term> terms_;
};

/// Estimate of E_g[1{p_mu <= Pcl} K (Pcl - p_mu)(Pcl - P* - xi(t)) | F_t] under
/// the beliefs, conditional on the auction still being open at info.t.
/// `known_efficient_price` switches to full-information conditioning.
Estimate conditional_value(const InformationSet& info, double mu, const AuctionParams& params,
                           const Beliefs& beliefs, const FeeSchedule& fee,
                           const ClosingRule& closing, const EstimatorConfig& cfg,
                           std::optional<double> known_efficient_price = std::nullopt);

// --- path sampling --------------------------------------------------------

/// Random inputs of one path, shared across arrival times and measures.
struct PathDraws {
  std::vector<int> counts;     // arrivals in step t, index t-1
  std::vector<double> z_sums;  // sum of standard-normal price shocks in step t
  double z_rest{0.0};          // shock of the resting order at time 0
  double z_star{0.0};
  double u_close{0.0};
  double z_trader{0.0};
};

/// Draws one path. If `shocks` is set it receives every market-maker shock in
/// arrival order, resting order first.
PathDraws draw_path(const ArrivalMeasure& measure, std::uint64_t seed, std::uint64_t path_index,
                    std::vector<double>* shocks = nullptr);

int draw_closing(const ClosingRule& rule, double u);

/// Simulates one auction under the mean pair `means` (beliefs or truth).
PathSample sample_path(const AuctionParams& params, const Beliefs& means, const FeeSchedule& fee,
                       const ClosingRule& closing, const TraderPolicy& trader, std::uint64_t seed,
                       std::uint64_t path_index);

}  // namespace pauction
