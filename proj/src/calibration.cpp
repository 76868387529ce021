#include "pauction/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pauction/core_model.hpp"

namespace pauction {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw ValidationError("line " + std::to_string(line) + ": " + what);
}

double number(std::string_view field, int line, const char* name) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    fail(line, std::string("cannot parse ") + name + " '" + std::string(field) + "'");
  if (!std::isfinite(v)) fail(line, std::string(name) + " must be finite");
  return v;
}

bool valid_date(std::string_view d) {
  if (d.size() != 10 || d[4] != '-' || d[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (d[i] < '0' || d[i] > '9') return false;
  const int month = (d[5] - '0') * 10 + (d[6] - '0');
  const int day = (d[8] - '0') * 10 + (d[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

BarSeries parse_bars(std::istream& in) {
  BarSeries out;
  std::string raw;
  int line_no = 0;
  bool header_seen = false;
  std::set<std::string> dates;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (!header_seen) {
      header_seen = true;
      const char* expected[] = {"date", "open", "high", "low", "close"};
      bool ok = fields.size() == 5;
      for (std::size_t i = 0; ok && i < 5; ++i) ok = lower(fields[i]) == expected[i];
      if (!ok) fail(line_no, "expected header 'date,open,high,low,close'");
      continue;
    }
    if (fields.size() != 5) fail(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
    DailyBar bar;
    bar.date = std::string(fields[0]);
    if (!valid_date(bar.date)) fail(line_no, "invalid date '" + bar.date + "'");
    bar.open = number(fields[1], line_no, "open");
    bar.high = number(fields[2], line_no, "high");
    bar.low = number(fields[3], line_no, "low");
    bar.close = number(fields[4], line_no, "close");
    if (bar.open <= 0.0 || bar.high <= 0.0 || bar.low <= 0.0 || bar.close <= 0.0)
      fail(line_no, "prices must be positive");
    if (bar.low > bar.high) fail(line_no, "low > high");
    if (bar.low > std::min(bar.open, bar.close) || std::max(bar.open, bar.close) > bar.high)
      fail(line_no, "open/close outside [low, high]");
    if (!dates.insert(bar.date).second) fail(line_no, "duplicate date " + bar.date);
    out.bars.push_back(std::move(bar));
  }
  if (out.bars.empty()) throw ValidationError("no data");
  const auto by_date = [](const DailyBar& a, const DailyBar& b) { return a.date < b.date; };
  if (!std::is_sorted(out.bars.begin(), out.bars.end(), by_date)) {
    std::stable_sort(out.bars.begin(), out.bars.end(), by_date);
    out.warnings.push_back("rows were not in date order; sorted by date");
  }
  return out;
}

BarSeries load_bars(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path.string());
  return parse_bars(in);
}

double estimate_mu(const std::vector<DailyBar>& bars) {
  if (bars.empty()) throw ValidationError("estimate_mu needs at least one bar");
  double s = 0.0;
  for (const auto& b : bars) s += b.day_price();
  return s / static_cast<double>(bars.size());
}

double estimate_sigma(const std::vector<DailyBar>& bars) {
  if (bars.size() < 2) throw ValidationError("estimate_sigma needs at least two bars");
  double s = 0.0;
  for (std::size_t i = 1; i < bars.size(); ++i) {
    const double d = bars[i].day_price() - bars[i - 1].day_price();
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(bars.size() - 1));
}

double estimate_gamma(const std::vector<DailyBar>& bars) {
  if (bars.size() < 2) throw ValidationError("estimate_gamma needs at least two bars");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < bars.size(); ++i) {
    const double c = std::log(bars[i].close);
    const double mid = 0.5 * (std::log(bars[i].low) + std::log(bars[i].high));
    const double mid_next = 0.5 * (std::log(bars[i + 1].low) + std::log(bars[i + 1].high));
    s += std::sqrt(std::max(4.0 * (c - mid) * (c - mid_next), 0.0));
  }
  return s / static_cast<double>(bars.size() - 1);
}

CalibrationResult calibrate(const std::vector<DailyBar>& bars) {
  return {estimate_mu(bars), estimate_sigma(bars), estimate_gamma(bars),
          static_cast<int>(bars.size())};
}

void to_json(nlohmann::json& j, const CalibrationResult& r) {
  j = nlohmann::json{{"mu", r.mu}, {"sigma", r.sigma}, {"gamma", r.gamma}, {"n_days", r.n_days}};
}

nlohmann::json to_params_fragment(const CalibrationResult& r) {
  nlohmann::json j = r;
  j["mu_star"] = r.mu;
  j["mu_mm"] = r.mu;
  return j;
}

}  // namespace pauction
