#include "pauction/cli.hpp"

#include <CLI11.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <span>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pauction/bilevel.hpp"
#include "pauction/calibration.hpp"
#include "pauction/quality.hpp"
#include "pauction/trader.hpp"

namespace pauction::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StockPreset {
  const char* name;
  double mu;
  double sigma;
  double gamma;
};

constexpr StockPreset kStocks[] = {{"apple", 184.39, 1.76, 0.0039},
                                   {"alphabet", 134.24, 2.11, 0.0065}};

const StockPreset& stock_preset(const std::string& name) {
  for (const auto& s : kStocks)
    if (name == s.name) return s;
  throw UsageError("unknown stock '" + name + "' (apple, alphabet)");
}

AuctionParams preset_params(const StockPreset& s) {
  return AuctionParams::make(10, 1.0, 10.0, s.sigma, s.mu, s.mu, 4.0, s.gamma);
}

struct Options {
  std::string params_path;
  std::string config_path;
  std::string stock;
  std::string beliefs{"perfect"};
  std::string fee{"zero"};
  std::string close;
  std::string out_dir;
  std::string method{"quad"};
  std::string cache_dir;
  std::uint64_t seed{0};
  std::int64_t paths{200000};
  int threads{0};
  int nodes{48};
  double tail_eps{1e-10};
  std::vector<double> rho;
  bool full_info{false};
  bool no_trader{false};
  bool exhaustive{false};

  std::string input;
  std::string output;
  std::string at;
  std::string objective{"total_spread"};
  double objective_rho{0.0};
  std::string fee_base{"all_arrivals"};
  std::string families{"linear,square"};
  std::string a_grid;
  std::string p_grid;
  int table{0};
};

struct Context {
  Options opt;
  nlohmann::json config = nlohmann::json::object();
  CLI::App* app{nullptr};
  std::ostream* out{nullptr};
  std::ostream* err{nullptr};

  bool given(const std::string& flag) const { return app->count(flag) > 0; }
  bool given_in(CLI::App* sub, const std::string& flag) const {
    return sub->count(flag) > 0 || app->count(flag) > 0;
  }
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

/// Applies config-file values for options not given on the command line.
void merge_config(Context& ctx) {
  if (ctx.opt.config_path.empty()) return;
  ctx.config = read_json(ctx.opt.config_path);
  const auto& c = ctx.config;
  auto& o = ctx.opt;
  auto take = [&](const char* key, const std::string& flag, auto& field) {
    if (c.contains(key) && !ctx.given(flag)) field = c.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("stock", "--stock", o.stock);
  take("fee", "--fee", o.fee);
  take("close", "--close", o.close);
  take("out", "--out", o.out_dir);
  take("seed", "--seed", o.seed);
  take("threads", "--threads", o.threads);
  take("rho", "--rho", o.rho);
  take("full_info", "--full-info", o.full_info);
  take("cache_dir", "--cache-dir", o.cache_dir);
  if (c.contains("beliefs") && !ctx.given("--beliefs")) {
    const auto& b = c.at("beliefs");
    o.beliefs = b.is_string() ? b.get<std::string>()
                              : std::to_string(b.at("mu_g_star").get<double>()) + "," +
                                    std::to_string(b.at("mu_g_mm").get<double>());
  }
  if (c.contains("estimator")) {
    const auto& e = c.at("estimator");
    auto take_e = [&](const char* key, const std::string& flag, auto& field) {
      if (e.contains(key) && !ctx.given(flag))
        field = e.at(key).get<std::decay_t<decltype(field)>>();
    };
    take_e("method", "--method", o.method);
    take_e("paths", "--paths", o.paths);
    take_e("nodes", "--nodes", o.nodes);
    take_e("poisson_tail_eps", "--tail-eps", o.tail_eps);
    take_e("seed", "--seed", o.seed);
  }
}

bool seed_given(const Context& ctx) {
  if (ctx.given("--seed")) return true;
  if (ctx.config.contains("seed")) return true;
  return ctx.config.contains("estimator") && ctx.config.at("estimator").contains("seed");
}

AuctionParams resolve_params(const Context& ctx) {
  const auto& o = ctx.opt;
  const bool from_config = ctx.config.contains("params");
  if (o.stock.empty() && o.params_path.empty() && !from_config)
    throw UsageError("no market parameters: pass --stock or --params");
  nlohmann::json doc = o.stock.empty() ? nlohmann::json(AuctionParams::make(10, 1, 10, 1, 0, 0))
                                       : nlohmann::json(preset_params(stock_preset(o.stock)));
  auto merge = [&](const nlohmann::json& patch) {
    if (!patch.is_object()) throw ValidationError("parameter document must be a JSON object");
    if (patch.contains("T") && !patch.contains("time_grid")) doc.erase("time_grid");
    for (const auto& [k, v] : patch.items()) doc[k] = v;
  };
  if (from_config) {
    const auto& p = ctx.config.at("params");
    merge(p.is_string() ? read_json(p.get<std::string>()) : p);
  }
  if (!o.params_path.empty()) merge(read_json(o.params_path));
  // A calibration fragment carries mu but no explicit mu_star / mu_mm.
  if (doc.contains("mu") && !doc.contains("mu_star")) doc["mu_star"] = doc["mu"];
  if (doc.contains("mu") && !doc.contains("mu_mm")) doc["mu_mm"] = doc["mu"];
  AuctionParams p;
  try {
    p = doc.get<AuctionParams>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("parameters: ") + e.what());
  }
  validate(p);
  return p;
}

Beliefs resolve_beliefs(const std::string& spec, const AuctionParams& p) {
  if (spec == "perfect") return Beliefs::perfect(p);
  if (spec == "minus_sigma" || spec == "minus") return Beliefs::minus_sigma(p);
  if (spec == "plus_sigma" || spec == "plus") return Beliefs::plus_sigma(p);
  const auto comma = spec.find(',');
  if (comma != std::string::npos) {
    try {
      return {std::stod(spec.substr(0, comma)), std::stod(spec.substr(comma + 1))};
    } catch (const std::exception&) {
    }
  }
  throw ValidationError("beliefs must be perfect, minus_sigma, plus_sigma or '<mu_g_star>,<mu_g_mm>'");
}

ClosingRule resolve_close(const std::string& spec, const AuctionParams& p) {
  const auto rule = spec.empty() ? ClosingRule::deterministic(p.horizon)
                                 : ClosingRule::parse(spec, p.horizon);
  validate(rule, p);
  return rule;
}

EstimatorConfig resolve_estimator(const Context& ctx) {
  const auto& o = ctx.opt;
  EstimatorConfig cfg;
  if (o.method == "quad") {
    cfg.method = EstimatorMethod::quadrature;
  } else if (o.method == "mc") {
    cfg.method = EstimatorMethod::monte_carlo;
  } else {
    throw UsageError("--method must be mc or quad");
  }
  cfg.paths = o.paths;
  cfg.nodes = o.nodes;
  cfg.poisson_tail_eps = o.tail_eps;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  validate(cfg);
  return cfg;
}

TraderConfig resolve_trader(const Context& ctx) {
  TraderConfig tc;
  tc.full_information = ctx.opt.full_info;
  tc.exhaustive = ctx.opt.exhaustive;
  return tc;
}

std::vector<double> parse_grid(const std::string& spec, const char* what) {
  std::vector<double> out;
  try {
    if (spec.find(':') != std::string::npos) {
      std::vector<double> parts;
      std::stringstream ss(spec);
      std::string item;
      while (std::getline(ss, item, ':')) parts.push_back(std::stod(item));
      if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
        throw ValidationError(std::string(what) + " range must be start:stop:step");
      const int n = static_cast<int>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
      for (int i = 0; i <= n; ++i) out.push_back(parts[0] + i * parts[2]);
    } else {
      std::stringstream ss(spec);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    }
  } catch (const std::invalid_argument&) {
    throw ValidationError(std::string("cannot parse ") + what + " '" + spec + "'");
  } catch (const std::out_of_range&) {
    throw ValidationError(std::string("cannot parse ") + what + " '" + spec + "'");
  }
  if (out.empty()) throw ValidationError(std::string(what) + " is empty");
  return out;
}

std::vector<FeeFamily> parse_families(const std::string& spec) {
  std::vector<FeeFamily> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "linear") {
      out.push_back(FeeFamily::linear);
    } else if (item == "square") {
      out.push_back(FeeFamily::square);
    } else if (item == "zero") {
      out.push_back(FeeFamily::zero);
    } else {
      throw ValidationError("unknown fee family '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("no fee family given");
  return out;
}

/// Writes `content` to <out>/<name>, or to stdout when no output directory is set.
void emit(const Context& ctx, const std::string& name, const std::string& content) {
  if (ctx.opt.out_dir.empty()) {
    *ctx.out << content;
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(ctx.opt.out_dir, ec);
  const auto path = std::filesystem::path(ctx.opt.out_dir) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << content;
  if (!f) throw IoError("cannot write " + path.string());
  *ctx.out << "wrote " << path.string() << '\n';
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string curve_json(const ArrivalValueCurve& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : curve.points)
    arr.push_back({{"tau", p.tau}, {"value", p.value}, {"stderr", p.stderr}});
  return arr.dump();
}

nlohmann::json result_json(const MechanismResult& m) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : m.curve.points)
    curve.push_back({{"tau", p.tau}, {"value", p.value}, {"stderr", p.stderr}});
  return {{"fee", m.fee},
          {"p", m.p},
          {"closing", m.closing},
          {"tau_hat", m.tau_hat},
          {"exchange_value", m.exchange_value.value},
          {"exchange_value_se", m.exchange_value.stderr},
          {"fee_revenue", m.fee_revenue.value},
          {"fee_revenue_se", m.fee_revenue.stderr},
          {"fee_gain", m.fee_gain},
          {"mq_with_fee", m.mq_with_fee.value},
          {"mq_with_fee_se", m.mq_with_fee.stderr},
          {"mq_zero_fee", m.mq_zero_fee.value},
          {"mq_zero_fee_se", m.mq_zero_fee.stderr},
          {"trader_value", m.trader_value.value},
          {"trader_value_se", m.trader_value.stderr},
          {"reservation_rhs", m.reservation_rhs.value},
          {"reservation_satisfied", m.reservation_satisfied},
          {"curve", curve}};
}

// --- commands ---------------------------------------------------------------

void cmd_calibrate(Context& ctx) {
  const auto series = load_bars(ctx.opt.input);
  for (const auto& w : series.warnings) *ctx.err << "warning: " << w << '\n';
  const auto result = calibrate(series.bars);
  const auto text = to_params_fragment(result).dump(2) + "\n";
  if (!ctx.opt.output.empty()) {
    std::ofstream f(ctx.opt.output, std::ios::binary);
    if (!f) throw IoError("cannot write " + ctx.opt.output);
    f << text;
    *ctx.out << "wrote " << ctx.opt.output << '\n';
  } else {
    emit(ctx, "calibration.json", text);
  }
}

void require_seed(const Context& ctx) {
  if (!seed_given(ctx)) throw UsageError("--seed is required for commands that sample");
}

void cmd_market_quality(Context& ctx) {
  require_seed(ctx);
  const auto params = resolve_params(ctx);
  const auto beliefs = resolve_beliefs(ctx.opt.beliefs, params);
  const auto fee = FeeSchedule::parse(ctx.opt.fee);
  const auto closing = resolve_close(ctx.opt.close, params);
  const auto cfg = resolve_estimator(ctx);
  QualityOptions qo;
  qo.trader = resolve_trader(ctx);
  qo.policy_enabled = !ctx.opt.no_trader;
  const auto rho = ctx.opt.rho.empty() ? std::vector<double>{0.1} : ctx.opt.rho;
  const auto report = evaluate_quality_curve(params, beliefs, fee, closing, rho, cfg, qo);
  std::ostringstream os;
  write_csv(os, report);
  emit(ctx, "market_quality.csv", os.str());
}

void cmd_best_response(Context& ctx) {
  const auto params = resolve_params(ctx);
  const auto beliefs = resolve_beliefs(ctx.opt.beliefs, params);
  const auto fee = FeeSchedule::parse(ctx.opt.fee);
  const auto closing = resolve_close(ctx.opt.close, params);
  const auto tc = resolve_trader(ctx);
  if (!ctx.opt.at.empty()) {
    const auto v = parse_grid(ctx.opt.at, "--at");
    if (v.size() != 3 && v.size() != 4)
      throw ValidationError("--at expects t,n,sum_prices[,efficient_price]");
    if (ctx.opt.method == "mc") require_seed(ctx);
    const auto cfg = resolve_estimator(ctx);
    const InformationSet info{static_cast<int>(v[0]), static_cast<int>(v[1]), v[2]};
    std::optional<double> known;
    if (v.size() == 4) known = v[3];
    const double mu = optimize_mu(info, params, beliefs, fee, closing, cfg, tc, known);
    const auto value = conditional_value(info, mu, params, beliefs, fee, closing, cfg, known);
    const nlohmann::json j{{"t", info.t},          {"n", info.n},
                           {"sum_prices", info.sum_prices},
                           {"mu_hat", mu},         {"value", value.value},
                           {"stderr", value.stderr}};
    emit(ctx, "best_response.json", j.dump(2) + "\n");
    return;
  }
  require_seed(ctx);
  const auto cfg = resolve_estimator(ctx);
  const auto choice = best_arrival(params, beliefs, fee, closing, cfg, tc);
  nlohmann::json j{{"tau_hat", choice.tau_hat},
                   {"fee", fee},
                   {"closing", closing},
                   {"beliefs", beliefs},
                   {"curve", nlohmann::json::parse(curve_json(choice.curve))}};
  emit(ctx, "best_response.json", j.dump(2) + "\n");
}

ObjectiveSpec resolve_objective(const Context& ctx, CLI::App* sub) {
  ObjectiveSpec spec;
  if (ctx.opt.objective == "total_spread") {
    spec.kind = ObjectiveKind::total_spread;
  } else if (ctx.opt.objective == "efficiency_minus_fee") {
    spec.kind = ObjectiveKind::efficiency_minus_fee;
  } else {
    throw UsageError("--objective must be total_spread or efficiency_minus_fee");
  }
  if (sub->count("--objective-rho") > 0) spec.rho = ctx.opt.objective_rho;
  if (ctx.opt.fee_base == "all_arrivals") {
    spec.fee_base = FeeBase::all_arrivals;
  } else if (ctx.opt.fee_base == "strategic_only") {
    spec.fee_base = FeeBase::strategic_only;
  } else {
    throw UsageError("--fee-base must be all_arrivals or strategic_only");
  }
  validate(spec);
  return spec;
}

const char* kDefaultPGrid = "0,0.02,0.04,0.06,0.08,0.1,0.12,0.14,0.16,0.18,0.2,0.5,1";

std::string default_a_grid(ObjectiveKind kind) {
  return kind == ObjectiveKind::total_spread ? "0:0.01:0.001" : "0:0.3:0.01";
}

void cmd_optimize(Context& ctx, CLI::App* sub) {
  require_seed(ctx);
  const auto params = resolve_params(ctx);
  const auto beliefs = resolve_beliefs(ctx.opt.beliefs, params);
  const auto cfg = resolve_estimator(ctx);
  const auto tc = resolve_trader(ctx);
  const auto objective = resolve_objective(ctx, sub);
  const auto families = parse_families(ctx.opt.families);
  const auto a_grid =
      parse_grid(ctx.opt.a_grid.empty() ? default_a_grid(objective.kind) : ctx.opt.a_grid, "a grid");
  const auto p_grid = parse_grid(ctx.opt.p_grid.empty() ? kDefaultPGrid : ctx.opt.p_grid, "p grid");
  const auto search =
      optimize_mechanism(objective, families, a_grid, p_grid, params, beliefs, cfg, tc);
  std::ostringstream sweep;
  write_csv(sweep, search.sweep);
  emit(ctx, "optimize_sweep.csv", sweep.str());
  nlohmann::json j = result_json(search.best);
  j["objective"] = objective.to_string();
  emit(ctx, "optimize.json", j.dump(2) + "\n");
}

// --- reproduction -----------------------------------------------------------

struct Deviation {
  std::ostringstream text;
  Deviation() { text << "row,column,computed,stderr,reference,abs_diff,rel_diff,z\n"; }
  void add(const std::string& row, const std::string& column, Estimate computed,
           double reference) {
    const double diff = computed.value - reference;
    const double rel = reference != 0.0 ? diff / std::abs(reference) : 0.0;
    const double z = computed.stderr > 0.0 ? diff / computed.stderr : 0.0;
    text << row << ',' << column << ',' << fmt(computed.value) << ',' << fmt(computed.stderr)
         << ',' << fmt(reference) << ',' << fmt(diff) << ',' << fmt(rel) << ',' << fmt(z) << '\n';
  }
};

// Published reference tables, one row per tau = 1..10.
struct CurveReference {
  const char* stock;
  const char* beliefs;
  std::vector<std::array<double, 5>> rows;
};

const std::vector<CurveReference>& curve_references() {
  static const std::vector<CurveReference> refs = {
      {"apple",
       "perfect",
       {{0.5135, 3.2592, 1.1509, 0.0561, 185.2150},
        {0.7489, 3.2516, 1.1509, 0.0721, 185.2238},
        {0.9871, 3.2435, 1.1506, 0.0874, 185.2996},
        {1.2273, 3.2354, 1.1503, 0.1022, 185.3871},
        {1.4691, 3.2274, 1.1501, 0.1166, 185.4779},
        {1.7123, 3.2195, 1.1499, 0.1307, 185.5669},
        {1.9566, 3.2117, 1.1496, 0.1444, 185.6473},
        {2.2014, 3.2035, 1.1493, 0.1586, 185.7147},
        {2.4451, 3.1948, 1.1487, 0.1731, 185.7359},
        {2.6843, 3.1832, 1.1471, 0.1869, 185.5862}}},
      {"alphabet",
       "perfect",
       {{0.7381, 4.6863, 1.188, 0.0879, 135.6279},
        {1.0765, 4.6755, 1.1879, 0.1134, 135.7143},
        {1.4188, 4.6641, 1.1876, 0.1371, 135.829},
        {1.764, 4.6525, 1.1872, 0.1602, 135.9517},
        {2.1116, 4.6412, 1.1869, 0.1819, 136.0635},
        {2.4612, 4.6299, 1.1866, 0.2035, 136.1738},
        {2.8123, 4.6186, 1.1863, 0.225, 136.2715},
        {3.164, 4.607, 1.186, 0.2467, 136.3597},
        {3.5143, 4.5945, 1.1853, 0.2696, 136.4248},
        {3.8581, 4.5779, 1.1836, 0.2907, 136.3411}}},
      // Columns for the belief cases: MQ, MQ^0.1, MQ^1, price impact, E[mu-hat].
      {"apple",
       "minus_sigma",
       {{3.2765, 1.1514, 9.3008, 0.0747, 182.222},
        {3.2963, 1.1521, 9.3864, 0.1212, 181.1093},
        {3.3243, 1.1529, 9.512, 0.1728, 180.1473},
        {3.3596, 1.1538, 9.6727, 0.2279, 179.2896},
        {3.4, 1.1549, 9.8582, 0.283, 178.5356},
        {3.4445, 1.1561, 10.0647, 0.3374, 177.8721},
        {3.4898, 1.1574, 10.2765, 0.388, 177.3117},
        {3.5356, 1.1586, 10.4933, 0.4351, 176.8247},
        {3.5777, 1.1594, 10.6966, 0.4763, 176.3853},
        {3.6161, 1.1591, 10.8899, 0.5133, 175.8701}}},
      {"apple",
       "plus_sigma",
       {{3.2763, 1.1514, 9.3202, 0.1737, 188.0503},
        {3.2772, 1.1516, 9.324, 0.2367, 188.8119},
        {3.2775, 1.1516, 9.3265, 0.2864, 189.388},
        {3.2778, 1.1515, 9.3288, 0.3251, 189.8009},
        {3.2781, 1.1515, 9.3309, 0.3551, 190.0937},
        {3.2785, 1.1515, 9.3327, 0.3779, 190.2949},
        {3.2787, 1.1515, 9.3339, 0.3955, 190.4307},
        {3.2786, 1.1514, 9.3341, 0.4089, 190.5091},
        {3.2777, 1.151, 9.3317, 0.4193, 190.5048},
        {3.274, 1.1496, 9.3206, 0.3307, 189.337}}},
  };
  return refs;
}

const CurveReference* find_curve_reference(const std::string& stock, const std::string& beliefs) {
  for (const auto& r : curve_references())
    if (stock == r.stock && beliefs == r.beliefs) return &r;
  return nullptr;
}

struct RandomizationReference {
  double p;
  double mq_apple;
  int tau_apple;
  double mq_alphabet;
  int tau_alphabet;
};

constexpr RandomizationReference kTable3[] = {
    {0.0, 3.6659, 10, 5.2687, 10}, {0.06, 3.6456, 10, 5.2395, 10},
    {0.07, 3.6422, 10, 5.2346, 10}, {0.08, 3.6365, 9, 5.2263, 9},
    {0.09, 3.6374, 9, 5.2277, 9},  {0.1, 3.6384, 9, 5.2291, 9},
    {0.5, 3.6764, 9, 5.2851, 9},   {1.0, 3.7244, 9, 5.3526, 9}};

struct MechanismReference {
  const char* stock;
  double rho;  // 0: risk-neutral
  double a;    // square family
  double p;
  int tau_hat;
  double exchange_value;
  double fee_gain;  // NaN when not reported
  double mq_with_fee;
  double mq_zero_fee;
};

constexpr double kNa = std::numeric_limits<double>::quiet_NaN();

constexpr MechanismReference kTable4[] = {
    {"apple", 0.0, 0.003, 0.0, 6, 3.553, kNa, kNa, 3.666},
    {"apple", 0.01, 0.001, 0.0, 10, 0.999, kNa, kNa, 1.004},
    {"apple", 0.5, 0.001, 0.0, 10, 2.598, kNa, kNa, 2.599},
    {"apple", 1.5, 0.002, 0.0, 7, 76.001, kNa, kNa, 80.180},
    {"alphabet", 0.0, 0.004, 0.0, 5, 5.064, kNa, kNa, 5.269},
    {"alphabet", 0.01, 0.001, 0.0, 10, 1.002, kNa, kNa, 1.007},
    {"alphabet", 0.5, 0.001, 0.1, 9, 3.313, kNa, kNa, 3.326},
    {"alphabet", 1.5, 0.003, 0.0, 6, 294.589, kNa, kNa, 318.554}};

constexpr MechanismReference kTable5[] = {
    {"apple", 0.0, 0.24, 0.0, 1, 0.417, 3.546, 3.963, 3.666},
    {"apple", 0.01, 0.24, 0.0, 1, 0.971, 0.035, 1.006, 1.004},
    {"apple", 0.5, 0.24, 0.0, 1, 0.466, 2.276, 2.742, 2.599},
    {"apple", 1.5, 0.23, 0.0, 1, 0.768, 153.904, 154.672, 80.180},
    {"alphabet", 0.0, 0.23, 0.0, 1, 2.173, 3.537, 5.710, 5.269},
    {"alphabet", 0.01, 0.24, 0.0, 1, 0.974, 0.035, 1.009, 1.007},
    {"alphabet", 0.5, 0.24, 0.0, 1, 0.610, 2.981, 3.591, 3.326},
    {"alphabet", 1.5, 0.22, 0.0, 1, 5.026, 982.068, 987.094, 318.554}};

void reproduce_curve(Context& ctx, int table, const AuctionParams& params, const EstimatorConfig& cfg,
                     const TraderConfig& tc) {
  const std::vector<std::string> cases =
      table == 1 ? std::vector<std::string>{"perfect"}
                 : std::vector<std::string>{"minus_sigma", "plus_sigma"};
  const std::vector<double> rho = table == 1 ? std::vector<double>{0.1} : std::vector<double>{0.1, 1.0};
  for (const auto& c : cases) {
    const auto beliefs = resolve_beliefs(c, params);
    QualityOptions qo;
    qo.trader = tc;
    const auto report = evaluate_quality_curve(params, beliefs, FeeSchedule::zero(),
                                               ClosingRule::deterministic(params.horizon), rho, cfg,
                                               qo);
    const std::string stem = "table" + std::to_string(table) + "_" + ctx.opt.stock +
                             (table == 1 ? "" : "_" + c);
    std::ostringstream csv;
    write_csv(csv, report);
    emit(ctx, stem + ".csv", csv.str());

    Deviation dev;
    if (const auto* ref = find_curve_reference(ctx.opt.stock, c)) {
      for (const auto& row : report.rows) {
        if (row.tau < 1 || row.tau > static_cast<int>(ref->rows.size())) continue;
        const auto& r = ref->rows[row.tau - 1];
        const std::string label = "tau=" + std::to_string(row.tau);
        if (table == 1) {
          dev.add(label, "trader_value", row.trader_value, r[0]);
          dev.add(label, "mq", row.mq, r[1]);
          dev.add(label, "mq_rho_0.1", row.mq_rho[0], r[2]);
        } else {
          dev.add(label, "mq", row.mq, r[0]);
          dev.add(label, "mq_rho_0.1", row.mq_rho[0], r[1]);
          dev.add(label, "mq_rho_1", row.mq_rho[1], r[2]);
        }
        dev.add(label, "price_impact", row.price_impact, r[3]);
        dev.add(label, "expected_mu_hat", row.expected_mu_hat, r[4]);
      }
    }
    emit(ctx, stem + "_deviation.csv", dev.text.str());
  }
}

void reproduce_randomization(Context& ctx, const AuctionParams& params, const EstimatorConfig& cfg,
                             const TraderConfig& tc) {
  const auto beliefs = Beliefs::minus_sigma(params);
  const ObjectiveSpec mq_only{};
  std::ostringstream csv;
  csv << "p,tau_hat,mq,mq_se,reference_mq,reference_tau_hat\n";
  Deviation dev;
  double best_p = 0.0;
  double best_mq = std::numeric_limits<double>::infinity();
  const bool apple = ctx.opt.stock == "apple";
  for (const auto& ref : kTable3) {
    const auto closing = ClosingRule::bernoulli(params.horizon - 1, params.horizon, ref.p);
    const auto m = evaluate_mechanism(FeeSchedule::zero(), closing, mq_only, params, beliefs, cfg, tc,
                                      false);
    const double ref_mq = apple ? ref.mq_apple : ref.mq_alphabet;
    const int ref_tau = apple ? ref.tau_apple : ref.tau_alphabet;
    csv << fmt(ref.p) << ',' << m.tau_hat << ',' << fmt(m.mq_with_fee.value) << ','
        << fmt(m.mq_with_fee.stderr) << ',' << fmt(ref_mq) << ',' << ref_tau << '\n';
    const std::string label = "p=" + fmt(ref.p);
    dev.add(label, "mq", m.mq_with_fee, ref_mq);
    dev.add(label, "tau_hat", {static_cast<double>(m.tau_hat), 0.0}, ref_tau);
    if (m.mq_with_fee.value < best_mq) {
      best_mq = m.mq_with_fee.value;
      best_p = ref.p;
    }
  }
  dev.add("optimum", "p_hat", {best_p, 0.0}, 0.08);
  emit(ctx, "table3_" + ctx.opt.stock + ".csv", csv.str());
  emit(ctx, "table3_" + ctx.opt.stock + "_deviation.csv", dev.text.str());
}

void reproduce_mechanism(Context& ctx, int table, const AuctionParams& params,
                         const EstimatorConfig& cfg, const TraderConfig& tc) {
  const auto beliefs = Beliefs::minus_sigma(params);
  const auto kind = table == 4 ? ObjectiveKind::total_spread : ObjectiveKind::efficiency_minus_fee;
  std::vector<ObjectiveSpec> objectives;
  std::vector<MechanismReference> refs;
  for (const auto& r : (table == 4 ? std::span(kTable4) : std::span(kTable5))) {
    if (ctx.opt.stock != r.stock) continue;
    ObjectiveSpec o;
    o.kind = kind;
    if (r.rho > 0.0) o.rho = r.rho;
    objectives.push_back(o);
    refs.push_back(r);
  }
  const auto families = parse_families(ctx.opt.families);
  const auto a_grid = parse_grid(ctx.opt.a_grid.empty() ? default_a_grid(kind) : ctx.opt.a_grid, "a grid");
  const auto p_grid = parse_grid(ctx.opt.p_grid.empty() ? kDefaultPGrid : ctx.opt.p_grid, "p grid");
  const auto searches =
      optimize_mechanism(objectives, families, a_grid, p_grid, params, beliefs, cfg, tc);

  const std::string stem = "table" + std::to_string(table) + "_" + ctx.opt.stock;
  std::ostringstream csv;
  csv << "objective,family,a,p,tau_hat,exchange_value,exchange_value_se,fee_gain,mq_with_fee,"
         "mq_with_fee_se,mq_zero_fee,mq_zero_fee_se\n";
  Deviation dev;
  for (std::size_t k = 0; k < searches.size(); ++k) {
    const auto& m = searches[k].best;
    const auto label = objectives[k].to_string();
    csv << label << ',' << to_string(m.fee.family) << ',' << fmt(m.fee.a) << ',' << fmt(m.p) << ','
        << m.tau_hat << ',' << fmt(m.exchange_value.value) << ',' << fmt(m.exchange_value.stderr)
        << ',' << fmt(m.fee_gain) << ',' << fmt(m.mq_with_fee.value) << ','
        << fmt(m.mq_with_fee.stderr) << ',' << fmt(m.mq_zero_fee.value) << ','
        << fmt(m.mq_zero_fee.stderr) << '\n';
    const auto& r = refs[k];
    dev.add(label, "a", {m.fee.a, 0.0}, r.a);
    dev.add(label, "p", {m.p, 0.0}, r.p);
    dev.add(label, "tau_hat", {static_cast<double>(m.tau_hat), 0.0}, r.tau_hat);
    dev.add(label, "exchange_value", m.exchange_value, r.exchange_value);
    if (!std::isnan(r.fee_gain)) dev.add(label, "fee_gain", {m.fee_gain, 0.0}, r.fee_gain);
    if (!std::isnan(r.mq_with_fee)) dev.add(label, "mq_with_fee", m.mq_with_fee, r.mq_with_fee);
    dev.add(label, "mq_zero_fee", m.mq_zero_fee, r.mq_zero_fee);

    std::ostringstream sweep;
    write_csv(sweep, searches[k].sweep);
    const std::string suffix = objectives[k].rho ? "_rho" + fmt(*objectives[k].rho) : "";
    emit(ctx, stem + "_sweep" + suffix + ".csv", sweep.str());
  }
  emit(ctx, stem + ".csv", csv.str());
  emit(ctx, stem + "_deviation.csv", dev.text.str());
}

void cmd_reproduce(Context& ctx) {
  require_seed(ctx);
  if (ctx.opt.stock.empty()) ctx.opt.stock = "apple";
  const auto params = resolve_params(ctx);
  const auto cfg = resolve_estimator(ctx);
  const auto tc = resolve_trader(ctx);
  switch (ctx.opt.table) {
    case 1:
    case 2:
      reproduce_curve(ctx, ctx.opt.table, params, cfg, tc);
      break;
    case 3:
      reproduce_randomization(ctx, params, cfg, tc);
      break;
    case 4:
    case 5:
      reproduce_mechanism(ctx, ctx.opt.table, params, cfg, tc);
      break;
    default:
      throw UsageError("unknown table id");
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  auto& o = ctx.opt;

  CLI::App app{"Periodic auction simulator: strategic trader, market quality and fee design"};
  app.name("pauction");
  app.require_subcommand(1);
  app.fallthrough();
  ctx.app = &app;

  app.add_option("--params", o.params_path, "JSON parameter document (or calibration output)");
  app.add_option("--config", o.config_path, "JSON run configuration; explicit flags win");
  app.add_option("--stock", o.stock, "Parameter preset")
      ->check(CLI::IsMember({"apple", "alphabet"}));
  app.add_option("--seed", o.seed, "Random seed (required when sampling)");
  app.add_option("--paths", o.paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
  app.add_option("--method", o.method, "Conditional-expectation estimator")
      ->check(CLI::IsMember({"mc", "quad"}));
  app.add_option("--threads", o.threads, "Worker threads (0: all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--out", o.out_dir, "Output directory (default: standard output)");
  app.add_option("--nodes", o.nodes, "Gauss-Hermite nodes");
  app.add_option("--tail-eps", o.tail_eps, "Poisson truncation mass");
  app.add_option("--beliefs", o.beliefs,
                 "perfect | minus_sigma | plus_sigma | <mu_g_star>,<mu_g_mm>");
  app.add_option("--fee", o.fee, "Fee schedule: zero | linear:<a> | square:<a>");
  app.add_option("--close", o.close, "Closing rule: close=<t> | p=<x>");
  app.add_option("--rho", o.rho, "Risk-aversion levels for MQ^rho columns")->delimiter(',');
  app.add_flag("--full-info", o.full_info, "Trader observes the efficient price");
  app.add_flag("--exhaustive", o.exhaustive, "Score every mu grid point");
  app.add_option("--cache-dir", o.cache_dir, "Directory for reusable mu-hat tables");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Estimate mu, sigma, gamma from daily bars");
  calibrate_cmd->add_option("--input", o.input, "CSV with date,open,high,low,close")->required();
  calibrate_cmd->add_option("--output", o.output, "Output JSON file");

  auto* mq_cmd = app.add_subcommand("market-quality", "Market quality per arrival time");
  mq_cmd->add_flag("--no-trader", o.no_trader, "Disable the strategic trader");

  auto* br_cmd = app.add_subcommand("best-response", "Trader's value curve and best arrival");
  br_cmd->add_option("--at", o.at, "Optimize mu-hat at t,n,sum_prices[,efficient_price]");

  auto* opt_cmd = app.add_subcommand("optimize", "Search fee schedule and closing randomization");
  opt_cmd->add_option("--objective", o.objective, "total_spread | efficiency_minus_fee")
      ->check(CLI::IsMember({"total_spread", "efficiency_minus_fee"}));
  opt_cmd->add_option("--objective-rho", o.objective_rho, "Risk aversion of the objective");
  opt_cmd->add_option("--fee-base", o.fee_base, "all_arrivals | strategic_only")
      ->check(CLI::IsMember({"all_arrivals", "strategic_only"}));
  opt_cmd->add_option("--families", o.families, "Fee families, e.g. linear,square");
  opt_cmd->add_option("--a-grid", o.a_grid, "start:stop:step or a list");
  opt_cmd->add_option("--p-grid", o.p_grid, "start:stop:step or a list");

  auto* rep_cmd = app.add_subcommand("reproduce", "Recompute a reference table with deviations");
  rep_cmd->add_option("--table", o.table, "Table id (1-5)")->required()->check(CLI::Range(1, 5));
  rep_cmd->add_option("--families", o.families, "Fee families for tables 4-5");
  rep_cmd->add_option("--a-grid", o.a_grid, "Fee coefficient grid for tables 4-5");
  rep_cmd->add_option("--p-grid", o.p_grid, "Randomization grid for tables 4-5");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    merge_config(ctx);
    if (!o.cache_dir.empty()) set_mu_table_cache_dir(std::filesystem::path(o.cache_dir));
    if (*calibrate_cmd) {
      cmd_calibrate(ctx);
    } else if (*mq_cmd) {
      cmd_market_quality(ctx);
    } else if (*br_cmd) {
      cmd_best_response(ctx);
    } else if (*opt_cmd) {
      cmd_optimize(ctx, opt_cmd);
    } else if (*rep_cmd) {
      cmd_reproduce(ctx);
    }
    flush_mu_table_cache();
    set_mu_table_cache_dir(std::nullopt);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InfeasibleError& e) {
    err << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace pauction::cli
