#include "pauction/simulation.hpp"

#include "pauction/clearing.hpp"

namespace pauction {

namespace {

std::vector<TauSummary> empty_summaries(const SimulationSpec& spec, std::size_t n_scorers) {
  std::vector<TauSummary> out(spec.taus.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].tau = spec.taus[i];
    out[i].extra.resize(n_scorers);
  }
  return out;
}

}  // namespace

std::vector<TauSummary> simulate(const SimulationSpec& spec, const std::vector<PathScorer>& scorers) {
  validate(spec.params);
  validate(spec.closing, spec.params);
  if (spec.paths < 1) throw ValidationError("paths must be positive");
  for (int tau : spec.taus)
    if (tau < 1 || tau > spec.params.horizon) throw ValidationError("arrival time outside [1, T]");

  const auto& prm = spec.params;
  const int T = prm.horizon;
  const double sigma = prm.sigma;
  const auto measure = arrival_measure(prm, spec.fee);
  std::vector<double> xi(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) xi[t] = spec.fee.eval(t);
  const bool same_measure = spec.beliefs.mu_g_mm == prm.mu_mm && spec.beliefs.mu_g_star == prm.mu_star;

  const std::int64_t blocks = (spec.paths + kPathsPerBlock - 1) / kPathsPerBlock;
  std::vector<std::vector<TauSummary>> partial(blocks);

  parallel_for(static_cast<std::size_t>(blocks), spec.threads, [&](std::size_t b) {
    auto acc = empty_summaries(spec, scorers.size());
    std::vector<int> n_at(T + 1);
    std::vector<double> z_at(T + 1);
    std::vector<double> fee_at(T + 1);
    const std::int64_t lo = static_cast<std::int64_t>(b) * kPathsPerBlock;
    const std::int64_t hi = std::min(spec.paths, lo + kPathsPerBlock);
    for (std::int64_t j = lo; j < hi; ++j) {
      const auto d = draw_path(measure, spec.seed, static_cast<std::uint64_t>(j));
      n_at[0] = 1;
      z_at[0] = d.z_rest;
      fee_at[0] = 0.0;
      for (int t = 1; t <= T; ++t) {
        n_at[t] = n_at[t - 1] + d.counts[t - 1];
        z_at[t] = z_at[t - 1] + d.z_sums[t - 1];
        fee_at[t] = fee_at[t - 1] + xi[t] * d.counts[t - 1];
      }
      const int c = draw_closing(spec.closing, d.u_close);
      const int n_c = n_at[c];
      const double s_true = n_c * prm.mu_mm + sigma * z_at[c];
      const double s_belief = n_c * spec.beliefs.mu_g_mm + sigma * z_at[c];
      const double x_true = prm.mu_star + sigma * d.z_star;
      const double x_belief = spec.beliefs.mu_g_star + sigma * d.z_star;
      const double no_trader = s_true / n_c;

      PathOutcome o;
      o.closing = c;
      o.efficient_price = x_true;
      o.no_trader_price = no_trader;
      o.avg_fee_all = fee_at[c] / n_c;

      for (std::size_t k = 0; k < spec.taus.size(); ++k) {
        const int tau = spec.taus[k];
        o.tau = tau;
        o.arrived = spec.policy != nullptr && tau <= c;
        o.clearing_price = no_trader;
        o.mu_hat = 0.0;
        o.trader_price = 0.0;
        o.executed = false;
        o.avg_fee_strategic = 0.0;
        o.belief_payoff = 0.0;
        o.belief_volume = 0.0;
        auto& acc_k = acc[k];
        if (o.arrived) {
          const InformationSet info{tau, n_at[tau], n_at[tau] * prm.mu_mm + sigma * z_at[tau]};
          o.mu_hat = spec.policy->mu_hat(info, x_true);
          o.trader_price = o.mu_hat + sigma * d.z_trader;
          const auto out = clear_from_sum(n_c, s_true, o.trader_price);
          o.clearing_price = out.price;
          o.executed = out.trader_included && o.trader_price <= out.price;
          o.avg_fee_strategic = xi[tau];

          if (spec.score_beliefs) {
            double p_g = o.trader_price;
            ClearingOutcome out_g = out;
            if (!same_measure) {
              const InformationSet info_g{tau, n_at[tau],
                                          n_at[tau] * spec.beliefs.mu_g_mm + sigma * z_at[tau]};
              p_g = spec.policy->mu_hat(info_g, x_belief) + sigma * d.z_trader;
              out_g = clear_from_sum(n_c, s_belief, p_g);
            }
            o.belief_payoff = trader_payoff(out_g, p_g, x_belief, prm.K, xi[tau]);
            if (out_g.trader_included && p_g <= out_g.price)
              o.belief_volume = prm.K * (out_g.price - p_g);
          }
          acc_k.mu_hat.add(o.mu_hat);
        }
        const double spread = o.clearing_price - x_true;
        const double impact = no_trader - o.clearing_price;
        acc_k.trader_value.add(o.belief_payoff);
        acc_k.trader_volume.add(o.belief_volume);
        acc_k.mq.add(spread * spread);
        acc_k.price_impact.add(impact * impact);
        acc_k.fee_all.add(o.avg_fee_all);
        acc_k.fee_strategic.add(o.avg_fee_strategic);
        for (std::size_t s = 0; s < scorers.size(); ++s) acc_k.extra[s].add(scorers[s](o));
      }
    }
    partial[b] = std::move(acc);
  });

  auto total = empty_summaries(spec, scorers.size());
  for (const auto& block : partial) {
    for (std::size_t k = 0; k < total.size(); ++k) {
      auto& t = total[k];
      const auto& p = block[k];
      t.trader_value.merge(p.trader_value);
      t.trader_volume.merge(p.trader_volume);
      t.mq.merge(p.mq);
      t.price_impact.merge(p.price_impact);
      t.mu_hat.merge(p.mu_hat);
      t.fee_all.merge(p.fee_all);
      t.fee_strategic.merge(p.fee_strategic);
      for (std::size_t s = 0; s < scorers.size(); ++s) t.extra[s].merge(p.extra[s]);
    }
  }
  return total;
}

}  // namespace pauction
