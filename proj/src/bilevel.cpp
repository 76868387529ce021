#include "pauction/bilevel.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace pauction {

double ObjectiveSpec::score(double abs_spread, double avg_fee) const {
  if (kind == ObjectiveKind::total_spread) {
    const double v = abs_spread + avg_fee;
    return rho ? std::exp(*rho * v) : v * v;
  }
  return rho ? std::exp(*rho * (abs_spread - avg_fee)) : abs_spread * abs_spread - avg_fee;
}

double ObjectiveSpec::quality(double abs_spread) const {
  return rho ? std::exp(*rho * abs_spread) : abs_spread * abs_spread;
}

std::string ObjectiveSpec::to_string() const {
  std::ostringstream os;
  os << (kind == ObjectiveKind::total_spread ? "total_spread" : "efficiency_minus_fee");
  if (rho) os << ":rho=" << *rho;
  if (fee_base == FeeBase::strategic_only) os << ":strategic_only";
  return os.str();
}

void validate(const ObjectiveSpec& spec) {
  if (spec.rho && !(*spec.rho > 0.0)) throw ValidationError("rho must be positive when given");
}

double average_fee(const PathSample& path, const FeeSchedule& fee, FeeBase base) {
  if (base == FeeBase::strategic_only) {
    const bool arrived = path.trader_arrival >= 1 && path.trader_arrival <= path.closing_time;
    return arrived ? fee.eval(path.trader_arrival) : 0.0;
  }
  if (path.mm_prices.empty()) return 0.0;
  double total = 0.0;
  for (double t : path.mm_arrival_times)
    if (t <= path.closing_time) total += fee.eval(t);
  return total / static_cast<double>(path.mm_prices.size());
}

namespace {

// Simulation of one (fee, closing) setting. For objective k, extra[2k] holds
// the objective and extra[2k + 1] its quality measure.
struct Scored {
  std::vector<TauSummary> rows;
  ArrivalValueCurve curve;
  int tau_hat{0};

  const TauSummary& at_tau_hat() const {
    for (const auto& r : rows)
      if (r.tau == tau_hat) return r;
    throw ValidationError("arrival time not simulated");
  }
};

Scored score_setting(const FeeSchedule& fee, const ClosingRule& closing,
                     const std::vector<ObjectiveSpec>& objectives, const AuctionParams& params,
                     const Beliefs& beliefs, const EstimatorConfig& cfg, const TraderConfig& tc) {
  validate(fee);
  validate(closing, params);
  validate(cfg);
  const auto policy = make_policy(params, beliefs, fee, closing, cfg, tc);
  std::vector<PathScorer> scorers;
  for (const auto& obj : objectives) {
    scorers.push_back([obj](const PathOutcome& o) {
      const double f = obj.fee_base == FeeBase::all_arrivals ? o.avg_fee_all : o.avg_fee_strategic;
      return obj.score(std::abs(o.clearing_price - o.efficient_price), f);
    });
    scorers.push_back([obj](const PathOutcome& o) {
      return obj.quality(std::abs(o.clearing_price - o.efficient_price));
    });
  }
  SimulationSpec spec;
  spec.params = params;
  spec.beliefs = beliefs;
  spec.fee = fee;
  spec.closing = closing;
  spec.policy = policy.get();
  spec.taus = params.time_grid;
  spec.paths = cfg.paths;
  spec.seed = cfg.seed;
  spec.threads = cfg.threads;
  Scored s;
  s.rows = simulate(spec, scorers);
  for (const auto& r : s.rows)
    s.curve.points.push_back({r.tau, r.trader_value.mean(), r.trader_value.stderr()});
  s.tau_hat = pick_best_arrival(s.curve);
  return s;
}

std::vector<Estimate> zero_fee_quality(const ClosingRule& closing,
                                       const std::vector<ObjectiveSpec>& objectives,
                                       const AuctionParams& params, const Beliefs& beliefs,
                                       const EstimatorConfig& cfg, const TraderConfig& tc) {
  const auto z = score_setting(FeeSchedule::zero(), closing, objectives, params, beliefs, cfg, tc);
  const auto& r = z.at_tau_hat();
  std::vector<Estimate> out;
  for (std::size_t k = 0; k < objectives.size(); ++k) out.push_back(r.extra[2 * k + 1].estimate());
  return out;
}

double two_point_p(const ClosingRule& closing, int horizon) {
  for (std::size_t i = 0; i < closing.support.size(); ++i)
    if (closing.support[i] == horizon - 1) return closing.probs[i];
  return 0.0;
}

std::vector<MechanismResult> results_from(const Scored& s, const FeeSchedule& fee,
                                          const ClosingRule& closing,
                                          const std::vector<ObjectiveSpec>& objectives,
                                          const AuctionParams& params) {
  const auto& r = s.at_tau_hat();
  std::vector<MechanismResult> out;
  for (std::size_t k = 0; k < objectives.size(); ++k) {
    MechanismResult m;
    m.fee = fee;
    m.closing = closing;
    m.p = two_point_p(closing, params.horizon);
    m.tau_hat = s.tau_hat;
    m.exchange_value = r.extra[2 * k].estimate();
    m.fee_revenue =
        (objectives[k].fee_base == FeeBase::all_arrivals ? r.fee_all : r.fee_strategic).estimate();
    m.mq_with_fee = r.extra[2 * k + 1].estimate();
    m.fee_gain = m.mq_with_fee.value - m.exchange_value.value;
    m.trader_value = r.trader_value.estimate();
    m.reservation_rhs = {0.5 * params.gamma * r.trader_volume.mean(),
                         0.5 * params.gamma * r.trader_volume.stderr()};
    m.reservation_satisfied = m.trader_value.value >= m.reservation_rhs.value;
    m.curve = s.curve;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

bool reservation_holds(const FeeSchedule& fee, const ClosingRule& closing,
                       const AuctionParams& params, const Beliefs& beliefs,
                       const EstimatorConfig& cfg, const TraderConfig& tc) {
  const auto s = score_setting(fee, closing, {}, params, beliefs, cfg, tc);
  const auto& r = s.at_tau_hat();
  return r.trader_value.mean() >= 0.5 * params.gamma * r.trader_volume.mean();
}

std::vector<MechanismResult> evaluate_mechanism(const FeeSchedule& fee,
                                                const ClosingRule& closing,
                                                const std::vector<ObjectiveSpec>& objectives,
                                                const AuctionParams& params,
                                                const Beliefs& beliefs, const EstimatorConfig& cfg,
                                                const TraderConfig& tc,
                                                bool with_zero_fee_reference) {
  for (const auto& o : objectives) validate(o);
  const auto s = score_setting(fee, closing, objectives, params, beliefs, cfg, tc);
  auto out = results_from(s, fee, closing, objectives, params);
  if (with_zero_fee_reference) {
    if (fee.is_zero()) {
      for (auto& m : out) m.mq_zero_fee = m.mq_with_fee;
    } else {
      const auto z = zero_fee_quality(closing, objectives, params, beliefs, cfg, tc);
      for (std::size_t k = 0; k < out.size(); ++k) out[k].mq_zero_fee = z[k];
    }
  }
  return out;
}

MechanismResult evaluate_mechanism(const FeeSchedule& fee, const ClosingRule& closing,
                                   const ObjectiveSpec& objective, const AuctionParams& params,
                                   const Beliefs& beliefs, const EstimatorConfig& cfg,
                                   const TraderConfig& tc, bool with_zero_fee_reference) {
  return evaluate_mechanism(fee, closing, std::vector<ObjectiveSpec>{objective}, params, beliefs,
                            cfg, tc, with_zero_fee_reference)
      .front();
}

namespace {

int family_rank(FeeFamily f) {
  switch (f) {
    case FeeFamily::zero:
      return 0;
    case FeeFamily::linear:
      return 1;
    case FeeFamily::square:
      return 2;
  }
  return 0;
}

bool preferred(const MechanismResult& a, const MechanismResult& b) {
  if (a.exchange_value.value != b.exchange_value.value)
    return a.exchange_value.value < b.exchange_value.value;
  if (a.fee.a != b.fee.a) return a.fee.a < b.fee.a;
  if (a.p != b.p) return a.p < b.p;
  return family_rank(a.fee.family) < family_rank(b.fee.family);
}

std::string infeasible_message(const std::vector<MechanismResult>& sweep,
                               const ObjectiveSpec& objective) {
  std::ostringstream os;
  os << "infeasible: all " << sweep.size()
     << " candidates violate the reservation constraint for " << objective.to_string();
  const MechanismResult* closest = nullptr;
  for (const auto& m : sweep) {
    const double slack = m.trader_value.value - m.reservation_rhs.value;
    if (closest == nullptr || slack > closest->trader_value.value - closest->reservation_rhs.value)
      closest = &m;
  }
  if (closest != nullptr) {
    os << "; closest: fee " << closest->fee.to_string() << ", p " << closest->p
       << ", trader value " << closest->trader_value.value << " < required "
       << closest->reservation_rhs.value;
  }
  return os.str();
}

}  // namespace

std::vector<MechanismSearch> optimize_mechanism(const std::vector<ObjectiveSpec>& objectives,
                                                const std::vector<FeeFamily>& families,
                                                const std::vector<double>& a_grid,
                                                const std::vector<double>& p_grid,
                                                const AuctionParams& params,
                                                const Beliefs& beliefs, const EstimatorConfig& cfg,
                                                const TraderConfig& tc) {
  if (objectives.empty()) throw ValidationError("no objective given");
  for (const auto& o : objectives) validate(o);
  if (families.empty() || a_grid.empty() || p_grid.empty())
    throw ValidationError("mechanism grids must not be empty");
  for (double a : a_grid)
    if (!(a >= 0.0)) throw ValidationError("fee coefficients must be non-negative");
  for (double p : p_grid)
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("randomization p must lie in [0, 1]");

  std::vector<MechanismSearch> out(objectives.size());
  for (double p : p_grid) {
    const auto closing = ClosingRule::bernoulli(params.horizon - 1, params.horizon, p);
    std::optional<std::vector<Estimate>> zero_ref;
    for (FeeFamily family : families) {
      const std::vector<double> as = family == FeeFamily::zero ? std::vector<double>{0.0} : a_grid;
      for (double a : as) {
        const FeeSchedule fee{family, a};
        const auto s = score_setting(fee, closing, objectives, params, beliefs, cfg, tc);
        auto ms = results_from(s, fee, closing, objectives, params);
        if (fee.is_zero() && !zero_ref) {
          zero_ref.emplace();
          for (const auto& m : ms) zero_ref->push_back(m.mq_with_fee);
        }
        for (std::size_t k = 0; k < ms.size(); ++k) {
          ms[k].p = p;
          out[k].sweep.push_back(std::move(ms[k]));
        }
      }
    }
    if (!zero_ref) zero_ref = zero_fee_quality(closing, objectives, params, beliefs, cfg, tc);
    for (std::size_t k = 0; k < out.size(); ++k)
      for (auto& m : out[k].sweep)
        if (m.p == p) m.mq_zero_fee = (*zero_ref)[k];
  }

  for (std::size_t k = 0; k < out.size(); ++k) {
    const MechanismResult* best = nullptr;
    for (const auto& m : out[k].sweep) {
      if (!m.reservation_satisfied) continue;
      if (best == nullptr || preferred(m, *best)) best = &m;
    }
    if (best == nullptr) throw InfeasibleError(infeasible_message(out[k].sweep, objectives[k]));
    out[k].best = *best;
  }
  return out;
}

MechanismSearch optimize_mechanism(const ObjectiveSpec& objective,
                                   const std::vector<FeeFamily>& families,
                                   const std::vector<double>& a_grid,
                                   const std::vector<double>& p_grid, const AuctionParams& params,
                                   const Beliefs& beliefs, const EstimatorConfig& cfg,
                                   const TraderConfig& tc) {
  return optimize_mechanism(std::vector<ObjectiveSpec>{objective}, families, a_grid, p_grid,
                            params, beliefs, cfg, tc)
      .front();
}

void write_csv(std::ostream& out, const std::vector<MechanismResult>& rows) {
  out << "family,a,p,tau_hat,exchange_value,exchange_value_se,fee_revenue,fee_revenue_se,"
         "fee_gain,mq_with_fee,mq_with_fee_se,mq_zero_fee,mq_zero_fee_se,trader_value,"
         "trader_value_se,reservation_rhs,reservation_rhs_se,reservation_satisfied\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(10);
  for (const auto& m : rows) {
    out << to_string(m.fee.family) << ',' << m.fee.a << ',' << m.p << ',' << m.tau_hat << ','
        << m.exchange_value.value << ',' << m.exchange_value.stderr << ',' << m.fee_revenue.value
        << ',' << m.fee_revenue.stderr << ',' << m.fee_gain << ',' << m.mq_with_fee.value << ','
        << m.mq_with_fee.stderr << ',' << m.mq_zero_fee.value << ',' << m.mq_zero_fee.stderr
        << ',' << m.trader_value.value << ',' << m.trader_value.stderr << ','
        << m.reservation_rhs.value << ',' << m.reservation_rhs.stderr << ','
        << (m.reservation_satisfied ? 1 : 0) << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

}  // namespace pauction
