#pragma once

#include <ostream>
#include <vector>

#include "pauction/trader.hpp"

namespace pauction {

/// sigma^2 (1 + (1 - exp(-T lambda)) / (T lambda)): E[(mean of N_T prices - P*)^2]
/// with N_T = 1 + Poisson(lambda T).
double mq_no_trader(const AuctionParams& params);

struct QualityRow {
  int tau{0};
  Estimate trader_value;
  Estimate mq;
  std::vector<Estimate> mq_rho;  // one per requested rho
  Estimate price_impact;
  Estimate expected_mu_hat;
};

struct QualityReport {
  std::vector<double> rho;
  std::vector<QualityRow> rows;
};

struct QualityOptions {
  TraderConfig trader;
  bool policy_enabled{true};
};

/// Scores under the true means, with the trader's policy built from beliefs.
QualityRow evaluate_quality(int tau, const AuctionParams& params, const Beliefs& beliefs,
                            const FeeSchedule& fee, const ClosingRule& closing,
                            const std::vector<double>& rho, const EstimatorConfig& cfg,
                            const QualityOptions& opts = {});

/// evaluate_quality for every tau in params.time_grid on common random numbers.
QualityReport evaluate_quality_curve(const AuctionParams& params, const Beliefs& beliefs,
                                     const FeeSchedule& fee, const ClosingRule& closing,
                                     const std::vector<double>& rho, const EstimatorConfig& cfg,
                                     const QualityOptions& opts = {});

struct QuarterCheck {
  double ratio{0.0};   // MQ(T) / MQ with no trader
  double stderr{0.0};
  // max |(Pcl - P*) - (Pcl,0 - P*) / 2| / max(|Pcl|, |P*|) over paths
  double max_halving_error{0.0};
  std::int64_t paths{0};
};

/// Full-information trader arriving at T, always included, submitting the
/// closed-form mean exactly.
QuarterCheck quarter_check(const AuctionParams& params, const EstimatorConfig& cfg);

/// One row per tau: tau, trader_value, se, mq, se, mq_rho_<r>, se ..., price_impact,
/// se, expected_mu_hat, se.
void write_csv(std::ostream& out, const QualityReport& report);

}  // namespace pauction
