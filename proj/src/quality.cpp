#include "pauction/quality.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "pauction/simulation.hpp"

namespace pauction {

double mq_no_trader(const AuctionParams& params) {
  validate(params);
  const double lt = params.lambda * params.horizon;
  return params.sigma * params.sigma * (1.0 + (-std::expm1(-lt)) / lt);
}

namespace {

QualityReport run_quality(const std::vector<int>& taus, const AuctionParams& params,
                          const Beliefs& beliefs, const FeeSchedule& fee,
                          const ClosingRule& closing, const std::vector<double>& rho,
                          const EstimatorConfig& cfg, const QualityOptions& opts) {
  validate(cfg);
  std::unique_ptr<PricePolicy> policy;
  if (opts.policy_enabled) policy = make_policy(params, beliefs, fee, closing, cfg, opts.trader);

  std::vector<PathScorer> scorers;
  for (double r : rho)
    scorers.push_back([r](const PathOutcome& o) {
      return std::exp(r * std::abs(o.clearing_price - o.efficient_price));
    });

  SimulationSpec spec;
  spec.params = params;
  spec.beliefs = beliefs;
  spec.fee = fee;
  spec.closing = closing;
  spec.policy = policy.get();
  spec.taus = taus;
  spec.paths = cfg.paths;
  spec.seed = cfg.seed;
  spec.threads = cfg.threads;
  const auto sums = simulate(spec, scorers);

  QualityReport report;
  report.rho = rho;
  for (const auto& s : sums) {
    QualityRow row;
    row.tau = s.tau;
    row.trader_value = s.trader_value.estimate();
    row.mq = s.mq.estimate();
    for (const auto& e : s.extra) row.mq_rho.push_back(e.estimate());
    row.price_impact = s.price_impact.estimate();
    row.expected_mu_hat = s.mu_hat.estimate();
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace

QualityRow evaluate_quality(int tau, const AuctionParams& params, const Beliefs& beliefs,
                            const FeeSchedule& fee, const ClosingRule& closing,
                            const std::vector<double>& rho, const EstimatorConfig& cfg,
                            const QualityOptions& opts) {
  return run_quality({tau}, params, beliefs, fee, closing, rho, cfg, opts).rows.front();
}

QualityReport evaluate_quality_curve(const AuctionParams& params, const Beliefs& beliefs,
                                     const FeeSchedule& fee, const ClosingRule& closing,
                                     const std::vector<double>& rho, const EstimatorConfig& cfg,
                                     const QualityOptions& opts) {
  return run_quality(params.time_grid, params, beliefs, fee, closing, rho, cfg, opts);
}

QuarterCheck quarter_check(const AuctionParams& params, const EstimatorConfig& cfg) {
  validate(params);
  validate(cfg);
  const int T = params.horizon;
  const double sigma = params.sigma;
  const auto measure = arrival_measure(params, FeeSchedule::zero());
  const std::int64_t blocks = (cfg.paths + kPathsPerBlock - 1) / kPathsPerBlock;
  std::vector<RunningStat> spread(blocks), error(blocks);
  parallel_for(static_cast<std::size_t>(blocks), cfg.threads, [&](std::size_t b) {
    const std::int64_t lo = static_cast<std::int64_t>(b) * kPathsPerBlock;
    const std::int64_t hi = std::min(cfg.paths, lo + kPathsPerBlock);
    for (std::int64_t j = lo; j < hi; ++j) {
      const auto d = draw_path(measure, cfg.seed, static_cast<std::uint64_t>(j));
      int n = 1;
      double z = d.z_rest;
      for (int t = 0; t < T; ++t) {
        n += d.counts[t];
        z += d.z_sums[t];
      }
      const double s = n * params.mu_mm + sigma * z;
      const double x = params.mu_star + sigma * d.z_star;
      const double mu_bar = closed_form_mu_bar(n, s, x);
      const double cleared = (s + mu_bar) / (n + 1);
      const double with_trader = cleared - x;
      const double half_base = 0.5 * (s / n - x);
      // Relative to the price level: the spread itself can be arbitrarily
      // close to zero, where any rounding is an unbounded relative error.
      const double scale = std::max({std::abs(cleared), std::abs(x), 1e-300});
      spread[b].add(with_trader * with_trader);
      error[b].add(std::abs(with_trader - half_base) / scale);
    }
  });
  RunningStat sp, err;
  for (std::int64_t b = 0; b < blocks; ++b) {
    sp.merge(spread[b]);
    err.merge(error[b]);
  }
  const double base = mq_no_trader(params);
  return {sp.mean() / base, sp.stderr() / base, err.max(), sp.count()};
}

void write_csv(std::ostream& out, const QualityReport& report) {
  out << "tau,trader_value,trader_value_se,mq,mq_se";
  for (double r : report.rho) out << ",mq_rho_" << r << ",mq_rho_" << r << "_se";
  out << ",price_impact,price_impact_se,expected_mu_hat,expected_mu_hat_se\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(10);
  for (const auto& row : report.rows) {
    out << row.tau << ',' << row.trader_value.value << ',' << row.trader_value.stderr << ','
        << row.mq.value << ',' << row.mq.stderr;
    for (const auto& e : row.mq_rho) out << ',' << e.value << ',' << e.stderr;
    out << ',' << row.price_impact.value << ',' << row.price_impact.stderr << ','
        << row.expected_mu_hat.value << ',' << row.expected_mu_hat.stderr << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

}  // namespace pauction
