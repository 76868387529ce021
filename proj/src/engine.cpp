#include "pauction/engine.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "pauction/clearing.hpp"
#include "pauction/normal.hpp"

namespace pauction {

namespace {

// Partial moments of w = zz - Z, Z ~ N(0, 1), over {w >= 0}.
inline void positive_moments(double zz, double& m1, double& m2) {
  const auto [cdf, pdf] = numeric::normal_cdf_pdf(zz);
  m1 = zz * cdf + pdf;
  m2 = (zz * zz + 1.0) * cdf + zz * pdf;
}

constexpr double kTermPrune = 1e-16;

}  // namespace

double ArrivalMeasure::cumulative(int from_t, int to_t) const {
  double s = 0.0;
  const int hi = std::min<int>(to_t, static_cast<int>(per_step_mean.size()));
  for (int t = std::max(from_t + 1, 1); t <= hi; ++t) s += per_step_mean[t - 1];
  return s;
}

ArrivalMeasure arrival_measure(const AuctionParams& params, const FeeSchedule& fee) {
  ArrivalMeasure m;
  m.per_step_mean.resize(params.horizon);
  for (int t = 1; t <= params.horizon; ++t)
    m.per_step_mean[t - 1] = params.lambda * std::exp(-fee.eval(t));
  return m;
}

double poisson_count_pmf(const ArrivalMeasure& measure, int from_t, int to_t, int m) {
  if (m < 0) throw ValidationError("arrival count must be non-negative");
  if (to_t < from_t) throw ValidationError("poisson_count_pmf needs from_t <= to_t");
  return numeric::poisson_pmf(measure.cumulative(from_t, to_t), m);
}

void validate(const EstimatorConfig& cfg) {
  if (cfg.paths < 1) throw ValidationError("paths must be positive");
  if (cfg.nodes < 2 || cfg.nodes > 256) throw ValidationError("nodes must lie in [2, 256]");
  if (!(cfg.poisson_tail_eps > 0.0) || cfg.poisson_tail_eps >= 1.0)
    throw ValidationError("poisson_tail_eps must lie in (0, 1)");
  if (cfg.threads < 0) throw ValidationError("threads must be non-negative");
}

void to_json(nlohmann::json& j, const EstimatorConfig& c) {
  j = nlohmann::json{{"method", c.method == EstimatorMethod::quadrature ? "quad" : "mc"},
                     {"paths", c.paths},
                     {"nodes", c.nodes},
                     {"poisson_tail_eps", c.poisson_tail_eps},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EstimatorConfig& c) {
  EstimatorConfig d;
  if (j.contains("method")) {
    const auto m = j.at("method").get<std::string>();
    if (m == "quad") {
      d.method = EstimatorMethod::quadrature;
    } else if (m == "mc") {
      d.method = EstimatorMethod::monte_carlo;
    } else {
      throw ValidationError("method must be 'mc' or 'quad'");
    }
  }
  d.paths = j.value("paths", d.paths);
  d.nodes = j.value("nodes", d.nodes);
  d.poisson_tail_eps = j.value("poisson_tail_eps", d.poisson_tail_eps);
  d.seed = j.value("seed", d.seed);
  c = d;
}

void RunningStat::merge(const RunningStat& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(o.n_);
  const double n = na + nb;
  const double d = o.mean_ - mean_;
  min_ = std::min(min_, o.min_);
  max_ = std::max(max_, o.max_);
  mean_ += d * nb / n;
  m2_ += o.m2_ + d * d * na * nb / n;
  n_ += o.n_;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const int workers = std::min<int>(resolve_threads(threads), static_cast<int>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next.store(count);
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

SplitMix64 make_stream(std::uint64_t seed, std::uint64_t path_index, Stream stream) {
  SplitMix64 mix(seed);
  std::uint64_t h = mix();
  SplitMix64 a(h ^ (path_index * 0xD1B54A32D192ED03ULL));
  h = a();
  SplitMix64 b(h ^ (static_cast<std::uint64_t>(stream) * 0x8CB92BA72F3D8DD7ULL));
  return SplitMix64(b());
}

StandardModel StandardModel::make(const AuctionParams& params, const Beliefs& beliefs,
                                  const FeeSchedule& fee, const ClosingRule& closing) {
  StandardModel m;
  m.horizon = params.horizon;
  m.rate = arrival_measure(params, fee).per_step_mean;
  m.fee.resize(params.horizon);
  for (int t = 1; t <= params.horizon; ++t) m.fee[t - 1] = fee.eval(t) / params.sigma;
  m.closing = closing;
  m.x_offset = (beliefs.mu_g_star - beliefs.mu_g_mm) / params.sigma;
  m.bound_width = params.mu_bound_width;
  return m;
}

nlohmann::json StandardModel::key() const {
  return {{"T", horizon},       {"rate", rate},         {"fee", fee},
          {"closing", closing}, {"x_offset", x_offset}, {"bound_width", bound_width}};
}

ObjectiveKernel::ObjectiveKernel(const StandardModel& model, int t, int n, double sum_std,
                                 double x_mean, int nodes, double tail_eps) {
  const double surv = model.closing.survival(t);
  if (!(surv > 0.0)) return;

  // Weight of (m future arrivals) after mixing over the closing law.
  std::vector<double> count_weight;
  const auto& support = model.closing.support;
  for (std::size_t i = 0; i < support.size(); ++i) {
    const int c = support[i];
    if (c < t || model.closing.probs[i] <= 0.0) continue;
    const double q = model.closing.probs[i] / surv;
    double lam = 0.0;
    for (int k = t + 1; k <= c; ++k) lam += model.rate[k - 1];
    const int upper = numeric::poisson_upper(lam, tail_eps);
    if (static_cast<int>(count_weight.size()) <= upper) count_weight.resize(upper + 1, 0.0);
    for (int m = 0; m <= upper; ++m) count_weight[m] += q * numeric::poisson_pmf(lam, m);
  }

  const auto& gh = numeric::gauss_hermite(nodes);
  terms_.reserve(count_weight.size() * gh.nodes.size());
  for (std::size_t m = 0; m < count_weight.size(); ++m) {
    const double wm = count_weight[m];
    if (wm < kTermPrune) continue;
    const double N = static_cast<double>(n + static_cast<int>(m));
    const double b2 = N / ((N + 1.0) * (N + 1.0));
    const double b1f = N / (N + 1.0);
    if (m == 0) {
      const double c = sum_std / N;
      terms_.push_back({c, wm * b1f * (c - x_mean), wm * b2});
      continue;
    }
    const double sd = std::sqrt(static_cast<double>(m));
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
      const double w = wm * gh.weights[k];
      if (w < kTermPrune) continue;
      const double c = (sum_std + sd * gh.nodes[k]) / N;
      terms_.push_back({c, w * b1f * (c - x_mean), w * b2});
    }
  }
}

double ObjectiveKernel::operator()(double mu) const {
  double acc = 0.0;
  for (const auto& term : terms_) {
    double m1, m2;
    positive_moments(term.c - mu, m1, m2);
    acc += term.b1 * m1 - term.b2 * m2;
  }
  return acc;
}

namespace {

Estimate conditional_value_mc(const InformationSet& info, double mu, const AuctionParams& params,
                              const Beliefs& beliefs, const FeeSchedule& fee,
                              const ClosingRule& closing, const EstimatorConfig& cfg,
                              std::optional<double> known_p_star) {
  const auto measure = arrival_measure(params, fee);
  const double surv = closing.survival(info.t);
  const double xi = fee.eval(info.t);
  const std::int64_t blocks = (cfg.paths + kPathsPerBlock - 1) / kPathsPerBlock;
  std::vector<RunningStat> stats(blocks);
  parallel_for(static_cast<std::size_t>(blocks), cfg.threads, [&](std::size_t b) {
    const std::int64_t lo = static_cast<std::int64_t>(b) * kPathsPerBlock;
    const std::int64_t hi = std::min(cfg.paths, lo + kPathsPerBlock);
    RunningStat st;
    for (std::int64_t j = lo; j < hi; ++j) {
      auto rng = make_stream(cfg.seed, static_cast<std::uint64_t>(j), Stream::conditional);
      std::normal_distribution<double> normal;
      std::uniform_real_distribution<double> unif;
      // Closing time conditional on close >= t.
      double u = unif(rng) * surv;
      int c = closing.latest();
      for (std::size_t i = 0; i < closing.support.size(); ++i) {
        if (closing.support[i] < info.t) continue;
        if (u < closing.probs[i]) {
          c = closing.support[i];
          break;
        }
        u -= closing.probs[i];
      }
      const double lam = measure.cumulative(info.t, c);
      int m = 0;
      if (lam > 0.0) m = std::poisson_distribution<int>(lam)(rng);
      const double y = m * beliefs.mu_g_mm + std::sqrt(static_cast<double>(m)) * params.sigma *
                                                 normal(rng);
      const double p_star =
          known_p_star ? *known_p_star : beliefs.mu_g_star + params.sigma * normal(rng);
      const double p = mu + params.sigma * normal(rng);
      const auto outcome = clear_from_sum(info.n + m, info.sum_prices + y, p);
      st.add(trader_payoff(outcome, p, p_star, params.K, xi));
    }
    stats[b] = st;
  });
  RunningStat total;
  for (const auto& s : stats) total.merge(s);
  return total.estimate();
}

}  // namespace

Estimate conditional_value(const InformationSet& info, double mu, const AuctionParams& params,
                           const Beliefs& beliefs, const FeeSchedule& fee,
                           const ClosingRule& closing, const EstimatorConfig& cfg,
                           std::optional<double> known_efficient_price) {
  validate(params);
  validate(info);
  validate(cfg);
  if (info.t < 1 || info.t > params.horizon)
    throw ValidationError("information time must lie in [1, T]");
  if (!(closing.survival(info.t) > 0.0)) return {};
  if (cfg.method == EstimatorMethod::monte_carlo)
    return conditional_value_mc(info, mu, params, beliefs, fee, closing, cfg,
                                known_efficient_price);

  const auto model = StandardModel::make(params, beliefs, fee, closing);
  const double s_std = (info.sum_prices - info.n * beliefs.mu_g_mm) / params.sigma;
  const double x_mean =
      (known_efficient_price ? (*known_efficient_price - beliefs.mu_g_mm) / params.sigma
                             : model.x_offset) +
      model.fee_at(info.t);
  const ObjectiveKernel kernel(model, info.t, info.n, s_std, x_mean, cfg.nodes,
                               cfg.poisson_tail_eps);
  const double mu_std = (mu - beliefs.mu_g_mm) / params.sigma;
  return {params.K * params.sigma * params.sigma * kernel(mu_std), 0.0};
}

PathDraws draw_path(const ArrivalMeasure& measure, std::uint64_t seed, std::uint64_t path_index,
                    std::vector<double>* shocks) {
  const int horizon = static_cast<int>(measure.per_step_mean.size());
  PathDraws d;
  d.counts.resize(horizon);
  d.z_sums.assign(horizon, 0.0);

  auto arrivals = make_stream(seed, path_index, Stream::arrivals);
  for (int t = 0; t < horizon; ++t) {
    const double lam = measure.per_step_mean[t];
    d.counts[t] = lam > 0.0 ? std::poisson_distribution<int>(lam)(arrivals) : 0;
  }

  auto prices = make_stream(seed, path_index, Stream::mm_prices);
  std::normal_distribution<double> normal;
  d.z_rest = normal(prices);
  if (shocks) {
    shocks->clear();
    shocks->push_back(d.z_rest);
  }
  for (int t = 0; t < horizon; ++t) {
    double s = 0.0;
    for (int k = 0; k < d.counts[t]; ++k) {
      const double z = normal(prices);
      s += z;
      if (shocks) shocks->push_back(z);
    }
    d.z_sums[t] = s;
  }

  auto star = make_stream(seed, path_index, Stream::efficient_price);
  d.z_star = std::normal_distribution<double>()(star);
  auto close = make_stream(seed, path_index, Stream::closing);
  d.u_close = std::uniform_real_distribution<double>()(close);
  auto trader = make_stream(seed, path_index, Stream::trader_price);
  d.z_trader = std::normal_distribution<double>()(trader);
  return d;
}

int draw_closing(const ClosingRule& rule, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.support.size(); ++i) {
    acc += rule.probs[i];
    if (u < acc) return rule.support[i];
  }
  return rule.support.back();
}

PathSample sample_path(const AuctionParams& params, const Beliefs& means, const FeeSchedule& fee,
                       const ClosingRule& closing, const TraderPolicy& trader, std::uint64_t seed,
                       std::uint64_t path_index) {
  validate(params);
  validate(closing, params);
  const auto measure = arrival_measure(params, fee);
  std::vector<double> shocks;
  const auto d = draw_path(measure, seed, path_index, &shocks);

  PathSample out;
  out.closing_time = draw_closing(closing, d.u_close);
  out.efficient_price = means.mu_g_star + params.sigma * d.z_star;
  out.mm_prices.push_back(means.mu_g_mm + params.sigma * shocks[0]);
  std::size_t next = 1;
  for (int t = 1; t <= out.closing_time; ++t) {
    for (int k = 0; k < d.counts[t - 1]; ++k, ++next) {
      out.mm_arrival_times.push_back(t);
      out.mm_prices.push_back(means.mu_g_mm + params.sigma * shocks[next]);
    }
  }

  out.trader_arrival = trader.arrival;
  const bool active =
      trader.policy != nullptr && trader.arrival >= 1 && trader.arrival <= out.closing_time;
  if (!active) {
    out.clearing_price = clear_no_trader(out.mm_prices);
    return out;
  }
  InformationSet info{trader.arrival, 1, out.mm_prices[0]};
  for (std::size_t i = 0; i < out.mm_arrival_times.size(); ++i) {
    if (out.mm_arrival_times[i] > trader.arrival) break;
    ++info.n;
    info.sum_prices += out.mm_prices[i + 1];
  }
  out.trader_mu_hat = trader.policy->mu_hat(info, out.efficient_price);
  out.trader_price = out.trader_mu_hat + params.sigma * d.z_trader;
  const auto outcome = clear(out.mm_prices, out.trader_price);
  out.clearing_price = outcome.price;
  out.executed = outcome.trader_included && out.trader_price <= outcome.price;
  return out;
}

}  // namespace pauction
