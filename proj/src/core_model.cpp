#include "pauction/core_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pauction {

namespace {

double parse_double(std::string_view text, std::string_view what) {
  std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ValidationError(std::string("cannot parse ") + std::string(what) + " from '" + s + "'");
  }
  return v;
}

}  // namespace

AuctionParams AuctionParams::make(int horizon, double lambda, double K, double sigma,
                                  double mu_star, double mu_mm, double mu_bound_width,
                                  double gamma) {
  AuctionParams p;
  p.horizon = horizon;
  p.lambda = lambda;
  p.K = K;
  p.sigma = sigma;
  p.mu_star = mu_star;
  p.mu_mm = mu_mm;
  p.mu_bound_width = mu_bound_width;
  p.gamma = gamma;
  p.time_grid.resize(horizon > 0 ? horizon : 0);
  std::iota(p.time_grid.begin(), p.time_grid.end(), 1);
  return p;
}

int AuctionParams::n_max() const {
  const double lt = lambda * horizon;
  return static_cast<int>(std::ceil(lt + 6.0 * std::sqrt(lt)));
}

void validate(const AuctionParams& p) {
  if (p.horizon < 2) throw ValidationError("horizon too short: T must be at least 2");
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda))
    throw ValidationError("lambda must be positive");
  if (!(p.K > 0.0) || !std::isfinite(p.K)) throw ValidationError("K must be positive");
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma))
    throw ValidationError("sigma must be positive");
  if (!std::isfinite(p.mu_star)) throw ValidationError("mu_star must be finite");
  if (!std::isfinite(p.mu_mm)) throw ValidationError("mu_mm must be finite");
  if (!(p.mu_bound_width > 0.0) || !std::isfinite(p.mu_bound_width))
    throw ValidationError("mu_bound_width must be positive");
  if (!(p.gamma >= 0.0) || !std::isfinite(p.gamma))
    throw ValidationError("gamma must be non-negative");
  if (p.time_grid.empty()) throw ValidationError("time_grid must not be empty");
  for (std::size_t i = 0; i < p.time_grid.size(); ++i) {
    if (p.time_grid[i] < 1) throw ValidationError("time_grid entries must be >= 1");
    if (i > 0 && p.time_grid[i] <= p.time_grid[i - 1])
      throw ValidationError("time_grid must be strictly increasing");
  }
  if (p.time_grid.back() != p.horizon) throw ValidationError("time_grid must end at T");
}

std::string_view to_string(FeeFamily f) {
  switch (f) {
    case FeeFamily::zero:
      return "zero";
    case FeeFamily::linear:
      return "linear";
    case FeeFamily::square:
      return "square";
  }
  return "zero";
}

FeeSchedule FeeSchedule::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view family = spec.substr(0, colon);
  FeeSchedule f;
  if (family == "zero" || family == "none") {
    f.family = FeeFamily::zero;
  } else if (family == "linear") {
    f.family = FeeFamily::linear;
  } else if (family == "square") {
    f.family = FeeFamily::square;
  } else {
    throw ValidationError("unknown fee family '" + std::string(family) + "'");
  }
  if (colon != std::string_view::npos) {
    f.a = parse_double(spec.substr(colon + 1), "fee coefficient");
  } else if (f.family != FeeFamily::zero) {
    throw ValidationError("fee spec needs a coefficient, e.g. square:0.24");
  }
  validate(f);
  return f;
}

std::string FeeSchedule::to_string() const {
  std::ostringstream os;
  os << pauction::to_string(family);
  if (family != FeeFamily::zero) os << ':' << a;
  return os.str();
}

void validate(const FeeSchedule& fee) {
  if (!(fee.a >= 0.0) || !std::isfinite(fee.a))
    throw ValidationError("fee coefficient a must be non-negative");
}

ClosingRule ClosingRule::bernoulli(int early, int late, double p) {
  if (p <= 0.0) return deterministic(late);
  if (p >= 1.0) return deterministic(early);
  return {{early, late}, {p, 1.0 - p}};
}

ClosingRule ClosingRule::parse(std::string_view spec, int horizon) {
  if (spec.rfind("close=", 0) == 0) {
    const auto t = parse_double(spec.substr(6), "closing time");
    if (t != std::floor(t)) throw ValidationError("closing time must be an integer");
    return deterministic(static_cast<int>(t));
  }
  if (spec.rfind("p=", 0) == 0) {
    const auto p = parse_double(spec.substr(2), "randomization probability");
    if (p < 0.0 || p > 1.0) throw ValidationError("randomization p must lie in [0, 1]");
    return bernoulli(horizon - 1, horizon, p);
  }
  throw ValidationError("closing spec must be 'close=<t>' or 'p=<x>'");
}

double ClosingRule::survival(int t) const {
  double s = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i)
    if (support[i] >= t) s += probs[i];
  return s;
}

int ClosingRule::latest() const { return *std::max_element(support.begin(), support.end()); }

std::string ClosingRule::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (i) os << ';';
    os << support[i] << '@' << probs[i];
  }
  return os.str();
}

void validate(const ClosingRule& rule, const AuctionParams& params) {
  if (rule.support.empty()) throw ValidationError("closing support must not be empty");
  if (rule.support.size() != rule.probs.size())
    throw ValidationError("closing support and probs differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < rule.support.size(); ++i) {
    if (!(rule.probs[i] >= 0.0)) throw ValidationError("closing probabilities must be >= 0");
    if (std::find(params.time_grid.begin(), params.time_grid.end(), rule.support[i]) ==
        params.time_grid.end())
      throw ValidationError("closing support must lie in time_grid");
    total += rule.probs[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("closing probabilities must sum to 1");
}

void validate(const InformationSet& info) {
  if (info.n < 1) throw ValidationError("information set needs n >= 1");
  if (!std::isfinite(info.sum_prices)) throw ValidationError("sum_prices must be finite");
}

void to_json(nlohmann::json& j, const AuctionParams& p) {
  j = nlohmann::json{{"T", p.horizon},
                     {"lambda", p.lambda},
                     {"K", p.K},
                     {"sigma", p.sigma},
                     {"mu_star", p.mu_star},
                     {"mu_mm", p.mu_mm},
                     {"mu_bound_width", p.mu_bound_width},
                     {"gamma", p.gamma},
                     {"time_grid", p.time_grid}};
}

void from_json(const nlohmann::json& j, AuctionParams& p) {
  AuctionParams d = AuctionParams::make(j.value("T", 10), 1.0, 10.0, 1.0, 0.0, 0.0);
  d.lambda = j.value("lambda", d.lambda);
  d.K = j.value("K", d.K);
  d.sigma = j.value("sigma", d.sigma);
  d.mu_star = j.value("mu_star", d.mu_star);
  d.mu_mm = j.value("mu_mm", d.mu_mm);
  d.mu_bound_width = j.value("mu_bound_width", d.mu_bound_width);
  d.gamma = j.value("gamma", d.gamma);
  if (j.contains("time_grid")) d.time_grid = j.at("time_grid").get<std::vector<int>>();
  p = std::move(d);
}

void to_json(nlohmann::json& j, const Beliefs& b) {
  j = nlohmann::json{{"mu_g_star", b.mu_g_star}, {"mu_g_mm", b.mu_g_mm}};
}

void from_json(const nlohmann::json& j, Beliefs& b) {
  b.mu_g_star = j.at("mu_g_star").get<double>();
  b.mu_g_mm = j.at("mu_g_mm").get<double>();
}

void to_json(nlohmann::json& j, const FeeSchedule& f) {
  j = nlohmann::json{{"family", std::string(to_string(f.family))}, {"a", f.a}};
}

void from_json(const nlohmann::json& j, FeeSchedule& f) {
  const auto family = j.at("family").get<std::string>();
  if (family == "zero") {
    f.family = FeeFamily::zero;
  } else if (family == "linear") {
    f.family = FeeFamily::linear;
  } else if (family == "square") {
    f.family = FeeFamily::square;
  } else {
    throw ValidationError("unknown fee family '" + family + "'");
  }
  f.a = j.value("a", 0.0);
  validate(f);
}

void to_json(nlohmann::json& j, const ClosingRule& c) {
  j = nlohmann::json{{"support", c.support}, {"probs", c.probs}};
}

void from_json(const nlohmann::json& j, ClosingRule& c) {
  c.support = j.at("support").get<std::vector<int>>();
  c.probs = j.at("probs").get<std::vector<double>>();
}

}  // namespace pauction
