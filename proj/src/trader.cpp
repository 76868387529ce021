#include "pauction/trader.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>

#include "pauction/simulation.hpp"

namespace pauction {

namespace {

// Tabulated sums cover truth-centred information sets for belief offsets up to
// this many sigmas per price, on top of the +-6 sqrt(n) sampling range.
constexpr double kShiftAllowance = 2.0;
constexpr int kCoarseStride = 8;
constexpr int kTableVersion = 1;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

int grid_count(double width, double step) {
  return static_cast<int>(std::lround(2.0 * width / step)) + 1;
}

}  // namespace

int argmax_on_grid(const std::function<double(double)>& objective, double mu_lo, double step,
                   int count, bool exhaustive) {
  std::vector<double> value(count, std::nan(""));
  auto eval = [&](int k) {
    if (std::isnan(value[k])) value[k] = objective(mu_lo + step * k);
    return value[k];
  };
  auto better = [&](int a, int b) {  // is a preferred over b
    const double va = value[a], vb = value[b];
    return va > vb || (va == vb && a < b);
  };

  if (exhaustive || count <= 2 * kCoarseStride + 1) {
    int best = 0;
    eval(0);
    for (int k = 1; k < count; ++k) {
      eval(k);
      if (better(k, best)) best = k;
    }
    return best;
  }

  std::vector<int> coarse;
  for (int k = 0; k < count; k += kCoarseStride) coarse.push_back(k);
  if (coarse.back() != count - 1) coarse.push_back(count - 1);
  int first = -1, second = -1;
  for (int k : coarse) {
    eval(k);
    if (first < 0 || better(k, first)) {
      second = first;
      first = k;
    } else if (second < 0 || better(k, second)) {
      second = k;
    }
  }
  int best = first;
  for (int centre : {first, second}) {
    if (centre < 0) continue;
    const int lo = std::max(0, centre - (kCoarseStride - 1));
    const int hi = std::min(count - 1, centre + (kCoarseStride - 1));
    for (int k = lo; k <= hi; ++k) {
      eval(k);
      if (better(k, best)) best = k;
    }
  }
  return best;
}

MuTable::MuTable(StandardModel model, int n_max, const TraderConfig& tc, int nodes,
                 double tail_eps)
    : model_(std::move(model)),
      n_max_(n_max),
      sum_step_(tc.sum_step),
      mu_step_(tc.mu_step),
      mu_lo_(model_.x_offset - model_.bound_width),
      grid_size_(grid_count(model_.bound_width, tc.mu_step)),
      exhaustive_(tc.exhaustive),
      nodes_(nodes),
      tail_eps_(tail_eps) {
  if (!(sum_step_ > 0.0)) throw ValidationError("sum_step must be positive");
  if (!(mu_step_ > 0.0)) throw ValidationError("mu_step must be positive");
  if (grid_size_ > 32767) throw ValidationError("mu grid too fine");
  if (n_max_ < 1) throw ValidationError("n_max must be positive");
  rows_.resize(static_cast<std::size_t>(model_.horizon) * n_max_);
  for (int t = 1; t <= model_.horizon; ++t) {
    for (int n = 1; n <= n_max_; ++n) {
      auto& r = rows_[(t - 1) * n_max_ + (n - 1)];
      const double half = kShiftAllowance * n + 6.0 * std::sqrt(static_cast<double>(n));
      const int half_bins = static_cast<int>(std::ceil(half / sum_step_));
      r.bin_lo = -half_bins;
      r.bins = 2 * half_bins + 1;
      r.cells = std::make_unique<std::atomic<std::int16_t>[]>(r.bins);
      for (int i = 0; i < r.bins; ++i) r.cells[i].store(-1, std::memory_order_relaxed);
    }
  }
}

const MuTable::Row* MuTable::row(int t, int n) const {
  if (t < 1 || t > model_.horizon || n < 1 || n > n_max_) return nullptr;
  return &rows_[(t - 1) * n_max_ + (n - 1)];
}

int MuTable::optimize_index(int t, int n, double sum_std) const {
  const ObjectiveKernel kernel(model_, t, n, sum_std, model_.x_offset + model_.fee_at(t), nodes_,
                               tail_eps_);
  return argmax_on_grid([&](double mu) { return kernel(mu); }, mu_lo_, mu_step_, grid_size_,
                        exhaustive_);
}

double MuTable::optimize(int t, int n, double sum_std) const {
  return mu_lo_ + mu_step_ * optimize_index(t, n, sum_std);
}

double MuTable::lookup(int t, int n, double sum_std) const {
  const Row* r = row(t, n);
  const long bin = std::lround(sum_std / sum_step_);
  if (r == nullptr || bin < r->bin_lo || bin >= r->bin_lo + r->bins) return optimize(t, n, sum_std);
  auto& cell = r->cells[bin - r->bin_lo];
  int idx = cell.load(std::memory_order_relaxed);
  if (idx < 0) {
    idx = optimize_index(t, n, static_cast<double>(bin) * sum_step_);
    cell.store(static_cast<std::int16_t>(idx), std::memory_order_relaxed);
  }
  return mu_lo_ + mu_step_ * idx;
}

std::size_t MuTable::filled_cells() const {
  std::size_t n = 0;
  for (const auto& r : rows_)
    for (int i = 0; i < r.bins; ++i)
      if (r.cells[i].load(std::memory_order_relaxed) >= 0) ++n;
  return n;
}

nlohmann::json MuTable::key() const {
  return {{"version", kTableVersion}, {"model", model_.key()}, {"n_max", n_max_},
          {"sum_step", sum_step_},    {"mu_step", mu_step_},   {"exhaustive", exhaustive_},
          {"nodes", nodes_},          {"tail_eps", tail_eps_}};
}

std::string MuTable::key_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(key().dump())));
  return buf;
}

void MuTable::save(const std::filesystem::path& file) const {
  std::vector<std::int32_t> cells;
  for (int t = 1; t <= model_.horizon; ++t) {
    for (int n = 1; n <= n_max_; ++n) {
      const Row* r = row(t, n);
      for (int i = 0; i < r->bins; ++i) {
        const int idx = r->cells[i].load(std::memory_order_relaxed);
        if (idx < 0) continue;
        cells.insert(cells.end(), {t, n, r->bin_lo + i, idx});
      }
    }
  }
  const nlohmann::json doc{{"key", key()}, {"cells", cells}};
  const auto bytes = nlohmann::json::to_cbor(doc);
  std::filesystem::create_directories(file.parent_path());
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) return;
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, file);
}

bool MuTable::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return false;
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const auto doc = nlohmann::json::from_cbor(bytes, true, false);
  if (doc.is_discarded() || !doc.contains("key") || doc.at("key") != key()) return false;
  const auto cells = doc.at("cells").get<std::vector<std::int32_t>>();
  for (std::size_t i = 0; i + 3 < cells.size(); i += 4) {
    const Row* r = row(cells[i], cells[i + 1]);
    const int bin = cells[i + 2];
    const int idx = cells[i + 3];
    if (r == nullptr || bin < r->bin_lo || bin >= r->bin_lo + r->bins || idx < 0 ||
        idx >= grid_size_)
      continue;
    r->cells[bin - r->bin_lo].store(static_cast<std::int16_t>(idx), std::memory_order_relaxed);
  }
  return true;
}

namespace {

struct TableRegistry {
  std::mutex mutex;
  std::map<std::string, std::shared_ptr<MuTable>> tables;
  std::optional<std::filesystem::path> dir;
};

TableRegistry& registry() {
  static TableRegistry r;
  return r;
}

}  // namespace

std::shared_ptr<MuTable> mu_table(const AuctionParams& params, const Beliefs& beliefs,
                                  const FeeSchedule& fee, const ClosingRule& closing,
                                  const EstimatorConfig& cfg, const TraderConfig& tc) {
  validate(params);
  validate(closing, params);
  validate(cfg);
  auto table = std::make_shared<MuTable>(StandardModel::make(params, beliefs, fee, closing),
                                         params.n_max(), tc, cfg.nodes, cfg.poisson_tail_eps);
  const auto hash = table->key_hash();
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  if (auto it = reg.tables.find(hash); it != reg.tables.end()) return it->second;
  if (reg.dir) table->load(*reg.dir / (hash + ".cbor"));
  reg.tables.emplace(hash, table);
  return table;
}

void set_mu_table_cache_dir(std::optional<std::filesystem::path> dir) {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  reg.dir = std::move(dir);
}

void flush_mu_table_cache() {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  if (!reg.dir) return;
  for (const auto& [hash, table] : reg.tables) table->save(*reg.dir / (hash + ".cbor"));
}

TablePolicy::TablePolicy(std::shared_ptr<MuTable> table, const AuctionParams& params,
                         const Beliefs& beliefs)
    : table_(std::move(table)), sigma_(params.sigma), mu_g_mm_(beliefs.mu_g_mm) {}

double TablePolicy::mu_hat(const InformationSet& info, double) const {
  const double s_std = (info.sum_prices - info.n * mu_g_mm_) / sigma_;
  return mu_g_mm_ + sigma_ * table_->lookup(info.t, info.n, s_std);
}

FullInformationPolicy::FullInformationPolicy(const AuctionParams& params, const Beliefs& beliefs,
                                             const FeeSchedule& fee, const ClosingRule& closing,
                                             const EstimatorConfig& cfg, const TraderConfig& tc)
    : model_(StandardModel::make(params, beliefs, fee, closing)),
      sigma_(params.sigma),
      mu_g_mm_(beliefs.mu_g_mm),
      tc_(tc),
      nodes_(cfg.nodes),
      tail_eps_(cfg.poisson_tail_eps) {}

double FullInformationPolicy::mu_hat(const InformationSet& info, double efficient_price) const {
  const double s_std = (info.sum_prices - info.n * mu_g_mm_) / sigma_;
  const double x = (efficient_price - mu_g_mm_) / sigma_ + model_.fee_at(info.t);
  const ObjectiveKernel kernel(model_, info.t, info.n, s_std, x, nodes_, tail_eps_);
  const double lo = model_.x_offset - model_.bound_width;
  const int idx = argmax_on_grid([&](double mu) { return kernel(mu); }, lo, tc_.mu_step,
                                 grid_count(model_.bound_width, tc_.mu_step), tc_.exhaustive);
  return mu_g_mm_ + sigma_ * (lo + tc_.mu_step * idx);
}

std::unique_ptr<PricePolicy> make_policy(const AuctionParams& params, const Beliefs& beliefs,
                                         const FeeSchedule& fee, const ClosingRule& closing,
                                         const EstimatorConfig& cfg, const TraderConfig& tc) {
  if (tc.full_information)
    return std::make_unique<FullInformationPolicy>(params, beliefs, fee, closing, cfg, tc);
  return std::make_unique<TablePolicy>(mu_table(params, beliefs, fee, closing, cfg, tc), params,
                                       beliefs);
}

double optimize_mu(const InformationSet& info, const AuctionParams& params, const Beliefs& beliefs,
                   const FeeSchedule& fee, const ClosingRule& closing, const EstimatorConfig& cfg,
                   const TraderConfig& tc, std::optional<double> known_efficient_price) {
  validate(params);
  validate(info);
  validate(cfg);
  if (info.t < 1 || info.t > params.horizon)
    throw ValidationError("information time must lie in [1, T]");
  const double lo = beliefs.mu_g_star - params.mu_bound_width * params.sigma;
  const double step = tc.mu_step * params.sigma;
  const int count = grid_count(params.mu_bound_width, tc.mu_step);

  if (cfg.method == EstimatorMethod::monte_carlo) {
    return lo + step * argmax_on_grid(
                           [&](double mu) {
                             return conditional_value(info, mu, params, beliefs, fee, closing,
                                                      cfg, known_efficient_price)
                                 .value;
                           },
                           lo, step, count, true);
  }
  const auto model = StandardModel::make(params, beliefs, fee, closing);
  const double s_std = (info.sum_prices - info.n * beliefs.mu_g_mm) / params.sigma;
  const double x = (known_efficient_price
                        ? (*known_efficient_price - beliefs.mu_g_mm) / params.sigma
                        : model.x_offset) +
                   model.fee_at(info.t);
  const ObjectiveKernel kernel(model, info.t, info.n, s_std, x, cfg.nodes, cfg.poisson_tail_eps);
  const double lo_std = model.x_offset - model.bound_width;
  const int idx = argmax_on_grid([&](double mu) { return kernel(mu); }, lo_std, tc.mu_step, count,
                                 tc.exhaustive);
  return lo + step * idx;
}

double closed_form_mu_bar(int n, double sum_prices, double p_star) {
  if (n < 1) throw ValidationError("closed_form_mu_bar needs n >= 1");
  const double nn = n;
  return (nn * (nn + 1.0) * p_star - (nn - 1.0) * sum_prices) / (2.0 * nn);
}

double unconstrained_value(int n, double sum_prices, double p_star, double mu, double sigma,
                           double K) {
  const double nn = n;
  const double a = sum_prices;
  const double b = sum_prices - (nn + 1.0) * p_star;
  const double e = a * b + (a - nn * b) * mu - nn * (mu * mu + sigma * sigma);
  return K * e / ((nn + 1.0) * (nn + 1.0));
}

namespace {

std::vector<TauSummary> run_trader(const std::vector<int>& taus, const AuctionParams& params,
                                   const Beliefs& beliefs, const FeeSchedule& fee,
                                   const ClosingRule& closing, const EstimatorConfig& cfg,
                                   const TraderConfig& tc) {
  validate(cfg);
  const auto policy = make_policy(params, beliefs, fee, closing, cfg, tc);
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
  return simulate(spec);
}

}  // namespace

Estimate value_of_arrival(int tau, const AuctionParams& params, const Beliefs& beliefs,
                          const FeeSchedule& fee, const ClosingRule& closing,
                          const EstimatorConfig& cfg, const TraderConfig& tc) {
  return run_trader({tau}, params, beliefs, fee, closing, cfg, tc).front().trader_value.estimate();
}

int pick_best_arrival(const ArrivalValueCurve& curve) {
  if (curve.points.empty()) throw ValidationError("empty arrival value curve");
  const ArrivalPoint* best = &curve.points.front();
  for (const auto& p : curve.points)
    if (p.value > best->value) best = &p;
  return best->tau;
}

ArrivalChoice best_arrival(const AuctionParams& params, const Beliefs& beliefs,
                           const FeeSchedule& fee, const ClosingRule& closing,
                           const EstimatorConfig& cfg, const TraderConfig& tc) {
  const auto rows = run_trader(params.time_grid, params, beliefs, fee, closing, cfg, tc);
  ArrivalChoice out;
  for (const auto& r : rows)
    out.curve.points.push_back({r.tau, r.trader_value.mean(), r.trader_value.stderr()});
  out.tau_hat = pick_best_arrival(out.curve);
  return out;
}

}  // namespace pauction
