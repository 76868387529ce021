// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
// Usage: acceptance [criterion ...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "pauction/bilevel.hpp"
#include "pauction/calibration.hpp"
#include "pauction/clearing.hpp"
#include "pauction/cli.hpp"
#include "pauction/normal.hpp"
#include "pauction/quality.hpp"
#include "pauction/trader.hpp"

using namespace pauction;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240101;
constexpr std::int64_t kCurvePaths = 200000;
constexpr std::int64_t kSweepPaths = 200000;
constexpr std::int64_t kMechanismPaths = 100000;

struct Outcome {
  bool pass{true};
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [fail: " << what << "] ";
    }
  }
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << std::fixed << v;
  return os.str();
}

AuctionParams stock(const std::string& name) {
  if (name == "apple") return AuctionParams::make(10, 1.0, 10.0, 1.76, 184.39, 184.39, 4.0, 0.0039);
  return AuctionParams::make(10, 1.0, 10.0, 2.11, 134.24, 134.24, 4.0, 0.0065);
}

EstimatorConfig mc_config(std::int64_t paths, std::uint64_t salt = 0) {
  EstimatorConfig cfg;
  cfg.paths = paths;
  cfg.seed = kSeed + salt;
  return cfg;
}

bool within(double value, double se, double target, double rel) {
  return std::abs(value - target) <= std::max(3.0 * se, rel * std::abs(target));
}

// Quality curves are shared by criteria 4-6.
std::map<std::string, QualityReport>& curve_cache() {
  static std::map<std::string, QualityReport> cache;
  return cache;
}

const QualityReport& curve(const std::string& name, const std::string& belief) {
  const std::string key = name + "/" + belief;
  auto& cache = curve_cache();
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const auto p = stock(name);
  const Beliefs b = belief == "perfect"  ? Beliefs::perfect(p)
                    : belief == "minus" ? Beliefs::minus_sigma(p)
                                        : Beliefs::plus_sigma(p);
  auto report = evaluate_quality_curve(p, b, FeeSchedule::zero(), ClosingRule::deterministic(10), {0.1, 1.0},
                                       mc_config(kCurvePaths));
  return cache.emplace(key, std::move(report)).first->second;
}

// --- 1 ----------------------------------------------------------------------

double quadratic_oracle(int n, double S, double p_star, double mu, double s) {
  const double nodes[] = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
  const double weights[] = {1.0 / 6, 2.0 / 3, 1.0 / 6};
  double v = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double P = mu + s * nodes[i];
    const double cl = (S + P) / (n + 1);
    v += weights[i] * (cl - P) * (cl - p_star);
  }
  return v;
}

void closed_forms(Outcome& o) {
  const auto p = stock("apple");
  // sigma^2 (1 + E[1/(1 + M)]), M ~ Poisson(10), summed directly.
  double e = 0.0;
  for (int m = 0; m < 400; ++m) e += numeric::poisson_pmf(10.0, m) / (m + 1.0);
  const double series = 1.76 * 1.76 * (1.0 + e);
  const double mq = mq_no_trader(p);
  // 3.0976 * (1 + (1 - e^-10) / 10) = 3.407346; the often quoted 3.40723 drops a 9
  // from 1.09999546.
  constexpr double kClosedForm = 3.407346;
  o.detail << "mq_no_trader=" << num(mq, 6) << " series=" << num(series, 6) << " pinned=" << num(kClosedForm, 6)
           << " (vs 3.40723: " << std::scientific << std::setprecision(1) << mq - 3.40723 << std::fixed << ")";
  o.require(std::abs(mq - kClosedForm) <= 1e-5 && std::abs(mq - series) <= 1e-5, "mq_no_trader");

  std::mt19937_64 rng(kSeed);
  std::uniform_int_distribution<int> n_dist(1, 8);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  int agree = 0;
  for (int k = 0; k < 50; ++k) {
    const int n = n_dist(rng);
    const double p_star = 100.0 + u(rng);
    const double S = n * (100.0 + u(rng));
    const double lo = p_star - 30.0;
    const double step = 60.0 / 9999;
    int best = 0;
    double best_v = -1e300;
    for (int i = 0; i < 10000; ++i) {
      const double v = quadratic_oracle(n, S, p_star, lo + i * step, 1.76);
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    agree += std::abs(closed_form_mu_bar(n, S, p_star) - (lo + best * step)) <= step;
  }
  o.detail << " mu_bar_agree=" << agree << "/50";
  o.require(agree == 50, "closed_form_mu_bar");
}

// --- 2 ----------------------------------------------------------------------

void clearing_oracle(Outcome& o) {
  std::mt19937_64 rng(kSeed + 2);
  std::uniform_int_distribution<int> count(1, 5);
  std::uniform_int_distribution<int> tick(-20, 20);
  int argmax_ok = 0, checked = 0, branch_ok = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> prices(count(rng));
    for (auto& x : prices) x = 100.0 + 0.25 * tick(rng);
    const double tp = 100.0 + 0.25 * tick(rng);
    const auto out = clear(prices, tp);
    double mean = 0.0;
    for (double x : prices) mean += x;
    mean /= static_cast<double>(prices.size());
    const bool expect_in = mean > tp;
    const double expect_price = expect_in ? (mean * prices.size() + tp) / (prices.size() + 1.0) : mean;
    branch_ok += out.trader_included == expect_in && std::abs(out.price - expect_price) < 1e-12;

    const double lo = std::min(*std::min_element(prices.begin(), prices.end()), tp) - 1.0;
    const double hi = std::max(*std::max_element(prices.begin(), prices.end()), tp) + 1.0;
    const double step = (hi - lo) / 2000;
    double best = -1.0;
    for (int i = 0; i <= 2000; ++i) best = std::max(best, executed_volume(prices, tp, lo + i * step, 10.0));
    if (best <= 0.0) continue;  // a lone resting order; nothing can trade
    ++checked;
    // The clearing price attains the grid maximum, and the grid maximizer lies
    // within one step of it.
    double arg = lo;
    for (int i = 0; i <= 2000; ++i)
      if (executed_volume(prices, tp, lo + i * step, 10.0) >= best - 1e-9) {
        arg = lo + i * step;
        break;
      }
    const bool attains = executed_volume(prices, tp, out.price, 10.0) >= best - 1e-9;
    argmax_ok += attains && std::abs(arg - out.price) <= step;
  }
  o.detail << "argmax " << argmax_ok << "/" << checked << ", branches " << branch_ok << "/500";
  o.require(argmax_ok == checked, "volume argmax");
  o.require(branch_ok == 500, "inclusion branches");
}

// --- 3 ----------------------------------------------------------------------

void halving(Outcome& o) {
  for (const auto& name : {"apple", "alphabet"}) {
    const auto q = quarter_check(stock(name), mc_config(100000, 3));
    o.detail << name << ": ratio=" << num(q.ratio) << "+-" << num(q.stderr) << " max_rel_err="
             << std::scientific << std::setprecision(2) << q.max_halving_error << std::fixed << " ";
    o.require(q.max_halving_error <= 1e-12, std::string(name) + " per-path identity");
    o.require(std::abs(q.ratio - 0.25) <= 3 * q.stderr, std::string(name) + " quarter ratio");
  }
}

// --- 4 ----------------------------------------------------------------------

void monotonicity(Outcome& o) {
  for (const auto& name : {"apple", "alphabet"}) {
    for (const auto& belief : {"perfect", "minus", "plus"}) {
      const auto& r = curve(name, belief);
      double worst = 1e300;  // smallest step in units of combined stderr
      for (std::size_t i = 1; i < r.rows.size(); ++i) {
        const auto& a = r.rows[i - 1].trader_value;
        const auto& b = r.rows[i].trader_value;
        const double se = std::sqrt(a.stderr * a.stderr + b.stderr * b.stderr);
        worst = std::min(worst, (b.value - a.value) / se);
      }
      o.detail << name << "/" << belief << " min_z=" << num(worst, 2) << " ";
      o.require(worst >= -3.0, std::string(name) + "/" + belief);
    }
  }
}

// --- 5 ----------------------------------------------------------------------

void table1(Outcome& o) {
  const auto& r = curve("apple", "perfect");
  const auto& row = r.rows.back();
  struct Check {
    const char* name;
    Estimate e;
    double target;
  };
  const Check checks[] = {{"V", row.trader_value, 2.6843},
                          {"MQ", row.mq, 3.1832},
                          {"PI", row.price_impact, 0.1869},
                          {"E[mu]", row.expected_mu_hat, 185.5862}};
  for (const auto& c : checks) {
    const bool ok = within(c.e.value, c.e.stderr, c.target, 0.02);
    o.detail << c.name << "=" << num(c.e.value) << "(" << num(c.target) << ") ";
    o.require(ok, c.name);
  }
  bool v_inc = true, pi_inc = true;
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    v_inc = v_inc && r.rows[i].trader_value.value > r.rows[i - 1].trader_value.value;
    pi_inc = pi_inc && r.rows[i].price_impact.value > r.rows[i - 1].price_impact.value;
  }
  o.require(v_inc, "V increasing");
  o.require(pi_inc, "PI increasing");
}

// --- 6 ----------------------------------------------------------------------

void table2(Outcome& o) {
  const auto& r = curve("apple", "minus");
  bool inc = true;
  for (std::size_t i = 1; i < r.rows.size(); ++i) inc = inc && r.rows[i].mq.value > r.rows[i - 1].mq.value;
  const auto& first = r.rows.front().mq;
  const auto& last = r.rows.back().mq;
  o.detail << "MQ(1)=" << num(first.value) << "(3.2765) MQ(10)=" << num(last.value) << "+-"
           << num(last.stderr) << "(3.6161)";
  o.require(inc, "MQ increasing in tau");
  o.require(within(first.value, first.stderr, 3.2765, 0.03), "MQ(1)");
  o.require(within(last.value, last.stderr, 3.6161, 0.03), "MQ(10)");
}

// --- 7 ----------------------------------------------------------------------

void table3(Outcome& o) {
  const double ps[] = {0.0, 0.06, 0.07, 0.08, 0.09, 0.1, 0.5, 1.0};
  for (const auto& name : {"apple", "alphabet"}) {
    const auto params = stock(name);
    const auto b = Beliefs::minus_sigma(params);
    std::vector<int> taus;
    double mq08 = 0.0, se08 = 0.0;
    o.detail << name << " tau_hat:";
    for (double p : ps) {
      const auto m = evaluate_mechanism(FeeSchedule::zero(), ClosingRule::bernoulli(9, 10, p), ObjectiveSpec{},
                                        params, b, mc_config(kSweepPaths, 7), {}, false);
      taus.push_back(m.tau_hat);
      o.detail << m.tau_hat << (p == 1.0 ? " " : ",");
      if (p == 0.08) {
        mq08 = m.mq_with_fee.value;
        se08 = m.mq_with_fee.stderr;
      }
    }
    // tau_hat = 10 for p < 0.08 and 9 from p = 0.08 on.
    bool flip = true;
    for (std::size_t i = 0; i < taus.size(); ++i) flip = flip && taus[i] == (ps[i] < 0.08 ? 10 : 9);
    o.require(flip, std::string(name) + " flip at 0.08");
    if (std::string(name) == "apple") {
      o.detail << "MQ(0.08)=" << num(mq08) << "+-" << num(se08) << "(3.6365) ";
      o.require(std::abs(mq08 - 3.6365) <= 0.02 * 3.6365, "apple MQ at p=0.08");
    }
  }
}

// --- 8 ----------------------------------------------------------------------

bool tau_nonincreasing(const std::vector<MechanismResult>& sweep, FeeFamily family, double p) {
  int prev = 1 << 30;
  for (const auto& m : sweep) {
    if (m.fee.family != family || m.p != p) continue;
    if (m.tau_hat > prev) return false;
    prev = m.tau_hat;
  }
  return true;
}

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) g.push_back(lo + i * step);
  return g;
}

void tables45(Outcome& o) {
  const auto params = stock("apple");
  const auto b = Beliefs::minus_sigma(params);
  const auto cfg = mc_config(kMechanismPaths, 8);
  const std::vector<FeeFamily> families{FeeFamily::linear, FeeFamily::square};

  const auto t4 = optimize_mechanism(ObjectiveSpec{}, families, grid(0.0, 0.01, 0.001), {0.0, 0.08, 0.5}, params,
                                     b, cfg);
  const auto& m4 = t4.best;
  o.detail << "T4: " << m4.fee.to_string() << " p=" << m4.p << " tau=" << m4.tau_hat
           << " value=" << num(m4.exchange_value.value, 3) << "(3.553) ";
  const double a4 = std::round(m4.fee.a * 1000) / 1000;
  o.require(m4.fee.family == FeeFamily::square && a4 >= 0.002 && a4 <= 0.004, "T4 fee");
  o.require(m4.p == 0.0, "T4 p");
  o.require(m4.tau_hat >= 5 && m4.tau_hat <= 7, "T4 tau_hat");
  o.require(std::abs(m4.exchange_value.value - 3.553) <= 0.03 * 3.553, "T4 value");

  ObjectiveSpec eff;
  eff.kind = ObjectiveKind::efficiency_minus_fee;
  const auto t5 = optimize_mechanism(eff, families, grid(0.0, 0.30, 0.01), {0.0}, params, b, cfg);
  const auto& m5 = t5.best;
  o.detail << "T5: " << m5.fee.to_string() << " tau=" << m5.tau_hat << " fee_gain=" << num(m5.fee_gain, 3)
           << "(3.546) ";
  o.require(m5.fee.family == FeeFamily::square && m5.fee.a >= 0.22 - 1e-9 && m5.fee.a <= 0.25 + 1e-9, "T5 fee");
  o.require(m5.tau_hat == 1, "T5 tau_hat");
  o.require(std::abs(m5.fee_gain - 3.546) <= 0.05 * 3.546, "T5 fee gain");

  bool mono = true;
  for (const auto f : families) {
    mono = mono && tau_nonincreasing(t4.sweep, f, 0.0) && tau_nonincreasing(t5.sweep, f, 0.0);
  }
  o.detail << "tau(a) nonincreasing=" << (mono ? "yes" : "no");
  o.require(mono, "tau_hat(a) shape");
}

// --- 9 ----------------------------------------------------------------------

void cross_validation(Outcome& o) {
  const auto p = stock("apple");
  std::mt19937_64 rng(kSeed + 9);
  std::uniform_int_distribution<int> t_dist(1, 10);
  std::uniform_int_distribution<int> n_dist(1, 15);
  std::uniform_int_distribution<int> belief(0, 2);
  std::normal_distribution<double> z;
  int agree = 0;
  for (int k = 0; k < 40; ++k) {
    const int t = t_dist(rng);
    const int n = n_dist(rng);
    const double sum = n * p.mu_mm + std::sqrt(n) * p.sigma * z(rng);
    const double mu = p.mu_star + 1.5 * p.sigma * z(rng);
    const int which = belief(rng);
    const Beliefs b = which == 0 ? Beliefs::perfect(p) : which == 1 ? Beliefs::minus_sigma(p) : Beliefs::plus_sigma(p);
    const auto fee = k % 4 == 3 ? FeeSchedule::square(0.003) : FeeSchedule::zero();
    const auto rule = k % 5 == 4 ? ClosingRule::bernoulli(9, 10, 0.3) : ClosingRule::deterministic(10);
    EstimatorConfig quad;
    auto mc = mc_config(200000, 900 + k);
    mc.method = EstimatorMethod::monte_carlo;
    const auto q = conditional_value({t, n, sum}, mu, p, b, fee, rule, quad);
    const auto m = conditional_value({t, n, sum}, mu, p, b, fee, rule, mc);
    agree += std::abs(q.value - m.value) <= 3 * m.stderr + 1e-12;
  }
  o.detail << "agree " << agree << "/40";
  o.require(agree >= 38, ">= 95% agreement");
}

// --- 10 ---------------------------------------------------------------------

void calibration(Outcome& o) {
  const std::string data = PAUCTION_TEST_DATA;
  std::ifstream f(data + "/fixture_expected.json");
  const auto want = nlohmann::json::parse(f);
  const auto r = calibrate(load_bars(data + "/fixture.csv").bars);
  const double err = std::max({std::abs(r.mu - want.at("mu").get<double>()),
                               std::abs(r.sigma - want.at("sigma").get<double>()),
                               std::abs(r.gamma - want.at("gamma").get<double>())});
  o.detail << "fixture max_err=" << std::scientific << std::setprecision(1) << err << std::fixed;
  o.require(err <= 1e-9, "fixture");
  struct Real {
    const char* env;
    double mu, sigma, gamma;
  };
  for (const auto& c : {Real{"PAUCTION_AAPL_CSV", 184.39, 1.76, 0.0039}, Real{"PAUCTION_GOOG_CSV", 134.24, 2.11, 0.0065}}) {
    const char* path = std::getenv(c.env);
    if (path == nullptr) {
      o.detail << "; " << c.env << " not set (optional check skipped)";
      continue;
    }
    const auto x = calibrate(load_bars(path).bars);
    o.detail << "; " << c.env << ": " << num(x.mu, 2) << "/" << num(x.sigma, 2) << "/" << num(x.gamma, 4);
    o.require(std::abs(x.mu - c.mu) <= 0.01 && std::abs(x.sigma - c.sigma) <= 0.01 &&
                  std::abs(x.gamma - c.gamma) <= 0.0005,
              c.env);
  }
}

// --- 11 ---------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pauction");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    files[e.path().filename().string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return files;
}

void determinism(Outcome& o) {
  const auto root = fs::temp_directory_path() / "pauction_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* threads : {"1", "3"}) {
    const auto dir = root / threads;
    const std::string seed = std::to_string(kSeed);
    const std::vector<std::vector<std::string>> commands = {
        {"market-quality", "--stock", "apple", "--beliefs", "minus_sigma", "--rho", "0.1,1", "--paths", "20000"},
        {"best-response", "--stock", "alphabet", "--close", "p=0.08", "--beliefs", "minus_sigma", "--paths",
         "20000"},
        {"optimize", "--stock", "apple", "--beliefs", "minus_sigma", "--a-grid", "0:0.004:0.002", "--p-grid",
         "0,0.1", "--paths", "5000"},
        {"reproduce", "--table", "3", "--stock", "apple", "--paths", "5000"},
    };
    int failures = 0;
    for (auto args : commands) {
      args.insert(args.end(), {"--seed", seed, "--threads", threads, "--out", dir.string()});
      failures += cli(args) != cli::kExitOk;
    }
    o.require(failures == 0, std::string("cli runs with ") + threads + " threads");
    runs.push_back(read_dir(dir));
  }
  o.detail << runs[0].size() << " files";
  o.require(!runs[0].empty() && runs[0] == runs[1], "byte-identical outputs");
  fs::remove_all(root);
}

struct Criterion {
  int id;
  const char* name;
  void (*fn)(Outcome&);
};

const Criterion kCriteria[] = {
    {1, "closed-form checks", closed_forms},
    {2, "clearing oracle", clearing_oracle},
    {3, "halving identity and quarter ratio", halving},
    {4, "value of arrival nondecreasing in tau", monotonicity},
    {5, "Apple perfect-information curve at tau=10", table1},
    {6, "Apple case (-) market quality", table2},
    {7, "closing randomization sweep", table3},
    {8, "fee schedule optima", tables45},
    {9, "quadrature vs Monte Carlo", cross_validation},
    {10, "calibration", calibration},
    {11, "determinism across thread counts", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): "
              << o.detail.str() << " (" << num(secs, 1) << " s)" << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
