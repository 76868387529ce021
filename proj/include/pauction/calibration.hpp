#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace pauction {

struct DailyBar {
  std::string date;  // YYYY-MM-DD
  double open{0.0};
  double high{0.0};
  double low{0.0};
  double close{0.0};

  double day_price() const { return (open + high + low + close) / 4.0; }
};

struct BarSeries {
  std::vector<DailyBar> bars;           // sorted by date
  std::vector<std::string> warnings;    // e.g. input was not in date order
};

/// Reads a CSV with header "date,open,high,low,close". Throws IoError if the
/// file cannot be opened and ValidationError (with the line number) for
/// malformed rows or bars with low > min(open, close) or high < max(open, close).
BarSeries load_bars(const std::filesystem::path& csv_path);
BarSeries parse_bars(std::istream& in);

/// Mean over days of (open + high + low + close) / 4.
double estimate_mu(const std::vector<DailyBar>& bars);
/// sqrt of the mean squared difference of consecutive day prices.
double estimate_sigma(const std::vector<DailyBar>& bars);
/// Mean over consecutive days of sqrt(max{4 (c_t - m_t)(c_t - m_{t+1}), 0}) with
/// c the log close and m the mid of log low and log high.
double estimate_gamma(const std::vector<DailyBar>& bars);

struct CalibrationResult {
  double mu{0.0};
  double sigma{0.0};
  double gamma{0.0};
  int n_days{0};
};

CalibrationResult calibrate(const std::vector<DailyBar>& bars);

/// Fragment mergeable into a parameter document: mu_star = mu_mm = mu.
nlohmann::json to_params_fragment(const CalibrationResult& r);
void to_json(nlohmann::json& j, const CalibrationResult& r);

}  // namespace pauction
