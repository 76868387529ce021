#pragma once

#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "pauction/simulation.hpp"
#include "pauction/trader.hpp"

namespace pauction {

/// Raised when every mechanism candidate violates the reservation constraint.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ObjectiveKind { total_spread, efficiency_minus_fee };
enum class FeeBase { all_arrivals, strategic_only };

struct ObjectiveSpec {
  ObjectiveKind kind{ObjectiveKind::total_spread};
  std::optional<double> rho;  // absent: quadratic, risk-neutral form
  FeeBase fee_base{FeeBase::all_arrivals};

  /// Per-path objective value from the spread and the average fee.
  double score(double abs_spread, double avg_fee) const;
  /// Per-path market-quality measure matching the objective: the squared
  /// spread, or exp(rho |spread|) when rho is set.
  double quality(double abs_spread) const;
  std::string to_string() const;
};

void validate(const ObjectiveSpec& spec);

struct MechanismResult {
  FeeSchedule fee;
  ClosingRule closing;
  double p{0.0};  // P(close = T - 1) for two-point rules
  int tau_hat{0};
  Estimate exchange_value;
  Estimate fee_revenue;  // E[average fee] under the chosen base
  Estimate mq_with_fee;  // the objective's quality measure at tau_hat
  Estimate mq_zero_fee;  // same measure with no fee, at that setting's own tau_hat
  double fee_gain{0.0};  // mq_with_fee - exchange_value
  Estimate trader_value;
  Estimate reservation_rhs;
  bool reservation_satisfied{false};
  ArrivalValueCurve curve;
};

double average_fee(const PathSample& path, const FeeSchedule& fee, FeeBase base);

/// V^fee(tau-hat) >= (gamma / 2) E_g[1{P <= Pcl} K (Pcl - P)] at the trader's
/// best response.
bool reservation_holds(const FeeSchedule& fee, const ClosingRule& closing,
                       const AuctionParams& params, const Beliefs& beliefs,
                       const EstimatorConfig& cfg, const TraderConfig& tc = {});

/// Best response under beliefs, then the objective scored under the true
/// means with fee-distorted arrivals, all on one set of paths.
/// `mq_zero_fee` is filled only when `with_zero_fee_reference` is set.
MechanismResult evaluate_mechanism(const FeeSchedule& fee, const ClosingRule& closing,
                                   const ObjectiveSpec& objective, const AuctionParams& params,
                                   const Beliefs& beliefs, const EstimatorConfig& cfg,
                                   const TraderConfig& tc = {},
                                   bool with_zero_fee_reference = true);

/// Several objectives scored on the same simulation; one result per objective.
std::vector<MechanismResult> evaluate_mechanism(const FeeSchedule& fee,
                                                const ClosingRule& closing,
                                                const std::vector<ObjectiveSpec>& objectives,
                                                const AuctionParams& params,
                                                const Beliefs& beliefs, const EstimatorConfig& cfg,
                                                const TraderConfig& tc = {},
                                                bool with_zero_fee_reference = true);

struct MechanismSearch {
  MechanismResult best;
  std::vector<MechanismResult> sweep;  // every candidate, in search order
};

/// Exhaustive search over (family, a, p) with p = P(close = T - 1). Candidates
/// violating the reservation constraint are discarded; ties go to smaller a,
/// then smaller p, then linear before square. Throws InfeasibleError when no
/// candidate is feasible.
MechanismSearch optimize_mechanism(const ObjectiveSpec& objective,
                                   const std::vector<FeeFamily>& families,
                                   const std::vector<double>& a_grid,
                                   const std::vector<double>& p_grid, const AuctionParams& params,
                                   const Beliefs& beliefs, const EstimatorConfig& cfg,
                                   const TraderConfig& tc = {});

/// One search per objective over a single sweep of simulations.
std::vector<MechanismSearch> optimize_mechanism(const std::vector<ObjectiveSpec>& objectives,
                                                const std::vector<FeeFamily>& families,
                                                const std::vector<double>& a_grid,
                                                const std::vector<double>& p_grid,
                                                const AuctionParams& params,
                                                const Beliefs& beliefs, const EstimatorConfig& cfg,
                                                const TraderConfig& tc = {});

void write_csv(std::ostream& out, const std::vector<MechanismResult>& rows);

}  // namespace pauction
