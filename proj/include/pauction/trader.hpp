#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pauction/engine.hpp"

namespace pauction {

/// Resolution and mode of the trader's inner optimization.
struct TraderConfig {
  double mu_step{0.05};   // mu grid step, in sigmas
  double sum_step{0.25};  // MuTable sum-of-prices step, in sigmas
  bool full_information{false};
  bool exhaustive{false};  // score every mu grid point instead of coarse-to-fine
};

/// Argmax over mu_lo + k*step, k = 0..count-1. Ties go to the smallest k.
int argmax_on_grid(const std::function<double(double)>& objective, double mu_lo, double step,
                   int count, bool exhaustive);

/// Lazily filled table of mu-hat grid indices over (t, n, sum of prices), in
/// standard units (see StandardModel). Cells are computed on first lookup and
/// are safe to read and fill from several threads.
class MuTable {
 public:
  MuTable(StandardModel model, int n_max, const TraderConfig& tc, int nodes, double tail_eps);

  /// mu-hat in standard units for the information (t, n, sum_std).
  double lookup(int t, int n, double sum_std) const;
  /// Direct optimization at the exact sum; used outside the tabulated range.
  double optimize(int t, int n, double sum_std) const;

  double bound_lo() const { return mu_lo_; }
  double bound_hi() const { return mu_lo_ + mu_step_ * (grid_size_ - 1); }
  int grid_size() const { return grid_size_; }
  int n_max() const { return n_max_; }
  std::size_t filled_cells() const;
  const StandardModel& model() const { return model_; }

  /// Content hash of every input that determines the table.
  std::string key_hash() const;
  nlohmann::json key() const;

  void save(const std::filesystem::path& file) const;
  /// Loads cells from a cache file; returns false if the file is missing or
  /// was built for a different key.
  bool load(const std::filesystem::path& file);

 private:
  struct Row {
    int bin_lo{0};
    int bins{0};
    std::unique_ptr<std::atomic<std::int16_t>[]> cells;
  };
  const Row* row(int t, int n) const;
  int optimize_index(int t, int n, double sum_std) const;

  StandardModel model_;
  int n_max_;
  double sum_step_;
  double mu_step_;
  double mu_lo_;
  int grid_size_;
  bool exhaustive_;
  int nodes_;
  double tail_eps_;
  std::vector<int> row_t_;  // time index per row block
  std::vector<Row> rows_;   // (t position, n - 1)
};

/// Shared table for the standardized problem behind (params, beliefs, fee,
/// closing). Tables are memoized per process and, if a cache directory is set,
/// persisted across runs.
std::shared_ptr<MuTable> mu_table(const AuctionParams& params, const Beliefs& beliefs,
                                  const FeeSchedule& fee, const ClosingRule& closing,
                                  const EstimatorConfig& cfg, const TraderConfig& tc = {});
void set_mu_table_cache_dir(std::optional<std::filesystem::path> dir);
/// Writes every memoized table to the cache directory, if one is set.
void flush_mu_table_cache();

/// mu-hat from a MuTable, in currency units.
class TablePolicy : public PricePolicy {
 public:
  TablePolicy(std::shared_ptr<MuTable> table, const AuctionParams& params, const Beliefs& beliefs);
  double mu_hat(const InformationSet& info, double efficient_price) const override;

 private:
  std::shared_ptr<MuTable> table_;
  double sigma_;
  double mu_g_mm_;
};

/// Full-information trader: optimizes against the realized efficient price.
class FullInformationPolicy : public PricePolicy {
 public:
  FullInformationPolicy(const AuctionParams& params, const Beliefs& beliefs, const FeeSchedule& fee,
                        const ClosingRule& closing, const EstimatorConfig& cfg,
                        const TraderConfig& tc = {});
  double mu_hat(const InformationSet& info, double efficient_price) const override;

 private:
  StandardModel model_;
  double sigma_;
  double mu_g_mm_;
  TraderConfig tc_;
  int nodes_;
  double tail_eps_;
};

std::unique_ptr<PricePolicy> make_policy(const AuctionParams& params, const Beliefs& beliefs,
                                         const FeeSchedule& fee, const ClosingRule& closing,
                                         const EstimatorConfig& cfg, const TraderConfig& tc = {});

/// Grid argmax of conditional_value over [mu_g* - w sigma, mu_g* + w sigma].
double optimize_mu(const InformationSet& info, const AuctionParams& params, const Beliefs& beliefs,
                   const FeeSchedule& fee, const ClosingRule& closing, const EstimatorConfig& cfg,
                   const TraderConfig& tc = {},
                   std::optional<double> known_efficient_price = std::nullopt);

/// Maximizer of the indicator-free objective when P* is known and the trader
/// is the last arrival: (n(n+1) p* - (n-1) S) / (2n).
double closed_form_mu_bar(int n, double sum_prices, double p_star);

/// E[K (Pcl - P)(Pcl - p*)] with P ~ N(mu, sigma^2), the trader always
/// included and no further arrivals.
double unconstrained_value(int n, double sum_prices, double p_star, double mu, double sigma,
                           double K);

struct ArrivalPoint {
  int tau{0};
  double value{0.0};
  double stderr{0.0};
};

struct ArrivalValueCurve {
  std::vector<ArrivalPoint> points;
};

Estimate value_of_arrival(int tau, const AuctionParams& params, const Beliefs& beliefs,
                          const FeeSchedule& fee, const ClosingRule& closing,
                          const EstimatorConfig& cfg, const TraderConfig& tc = {});

struct ArrivalChoice {
  int tau_hat{0};
  ArrivalValueCurve curve;
};

/// Curve over params.time_grid on common random numbers; ties to the earliest.
ArrivalChoice best_arrival(const AuctionParams& params, const Beliefs& beliefs,
                           const FeeSchedule& fee, const ClosingRule& closing,
                           const EstimatorConfig& cfg, const TraderConfig& tc = {});

int pick_best_arrival(const ArrivalValueCurve& curve);

}  // namespace pauction
