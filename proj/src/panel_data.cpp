#include "tfm/panel_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tfm/errors.hpp"

namespace tfm {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_row(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      cells.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    cells.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty()) {
    throw input_error("cannot parse cell '" + cell + "' at row " +
                      std::to_string(row) + ", column " + col);
  }
  if (!std::isfinite(value)) {
    throw input_error("non-finite value '" + cell + "' at row " +
                      std::to_string(row) + ", column " + col);
  }
  return value;
}

} // namespace

PanelSeries make_panel(Eigen::MatrixXd values, std::vector<std::string> labels) {
  const Eigen::Index p = values.rows(), n = values.cols();
  if (p < 1 || n < 2) {
    throw input_error("panel needs at least 1 series and 2 time points, got " +
                      std::to_string(p) + " x " + std::to_string(n));
  }
  if (!values.allFinite()) {
    throw input_error("panel contains non-finite values");
  }
  if (labels.empty()) {
    labels.reserve(static_cast<std::size_t>(p));
    for (Eigen::Index q = 0; q < p; ++q) labels.push_back("col" + std::to_string(q + 1));
  }
  if (static_cast<Eigen::Index>(labels.size()) != p) {
    throw input_error("label count does not match series count");
  }
  PanelSeries out;
  out.values = std::move(values);
  out.series_labels = std::move(labels);
  out.time_index.resize(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) out.time_index[static_cast<std::size_t>(t)] = t;
  return out;
}

Eigen::Index ThresholdSeries::first_usable() const {
  Eigen::Index t = 0;
  while (t < z.size() && !std::isfinite(z[t])) ++t;
  return t;
}

std::vector<double> ThresholdSeries::usable_values() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(z.size()));
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    if (std::isfinite(z[t])) out.push_back(z[t]);
  }
  return out;
}

ThresholdSeries make_threshold_series(Eigen::VectorXd z, std::string label) {
  if (z.size() < 2) throw input_error("threshold series needs at least 2 entries");
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    // NaN marks an unusable entry; infinities are rejected outright.
    if (std::isinf(z[t])) {
      throw input_error("infinite threshold value at t = " + std::to_string(t + 1));
    }
  }
  ThresholdSeries out;
  out.z = std::move(z);
  out.label = std::move(label);
  if (out.first_usable() == out.z.size()) {
    throw input_error("threshold series '" + out.label + "' has no usable entries");
  }
  return out;
}

int RegimePartition::count_one() const {
  return static_cast<int>(std::count(in_one.begin(), in_one.end(), true));
}

int RegimePartition::count_two() const {
  return static_cast<int>(std::count(in_two.begin(), in_two.end(), true));
}

RegimePartition RegimePartition::from_labels(const std::vector<int>& labels) {
  RegimePartition part;
  part.r1 = std::numeric_limits<double>::quiet_NaN();
  part.r2 = std::numeric_limits<double>::quiet_NaN();
  part.in_one.resize(labels.size());
  part.in_two.resize(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] != 1 && labels[t] != 2) {
      throw input_error("labels must be 1 or 2, got " + std::to_string(labels[t]));
    }
    part.in_one[t] = labels[t] == 1;
    part.in_two[t] = labels[t] == 2;
  }
  return part;
}

RegimePartition make_partition(const ThresholdSeries& z, double r1, double r2) {
  if (!(r1 <= r2)) {
    throw input_error("r1 must be <= r2");
  }
  const auto n = static_cast<std::size_t>(z.n());
  RegimePartition part;
  part.r1 = r1;
  part.r2 = r2;
  part.in_one.resize(n);
  part.in_two.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double zt = z.z[static_cast<Eigen::Index>(t)];
    part.in_one[t] = zt < r1;   // NaN compares false: unusable -> neither
    part.in_two[t] = zt >= r2;
  }
  return part;
}

LoadedPanel load_panel(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) {
    throw input_error("cannot open '" + path.string() + "'");
  }
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty() && rows.empty()) continue;  // leading blank lines
    if (trim(line).empty()) break;                     // trailing blank line ends the table
    rows.push_back(split_row(line, options.delimiter));
  }
  if (rows.empty()) throw input_error("'" + path.string() + "' is empty");

  std::vector<std::string> labels;
  std::size_t first_data = 0;
  const std::size_t ncols = rows[0].size();
  if (options.has_header) {
    labels = rows[0];
    first_data = 1;
  } else {
    for (std::size_t c = 0; c < ncols; ++c) labels.push_back("col" + std::to_string(c + 1));
  }
  const std::size_t n = rows.size() - first_data;
  if (n < 2) throw input_error("'" + path.string() + "' has fewer than 2 data rows");

  std::optional<std::size_t> z_idx;
  if (options.z_column) {
    for (std::size_t c = 0; c < labels.size(); ++c) {
      if (labels[c] == *options.z_column) { z_idx = c; break; }
    }
    if (!z_idx) {
      throw input_error("z column '" + *options.z_column + "' not found in '" +
                        path.string() + "'");
    }
    if (ncols < 2) throw input_error("no panel columns remain after removing the z column");
  }

  const std::size_t p = ncols - (z_idx ? 1 : 0);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  Eigen::VectorXd zvec(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = rows[r + first_data];
    if (row.size() != ncols) {
      throw input_error("ragged row " + std::to_string(r + first_data + 1) + " in '" +
                        path.string() + "': got " + std::to_string(row.size()) +
                        " cells, expected " + std::to_string(ncols));
    }
    std::size_t q = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
      const double v = parse_cell(row[c], r + first_data + 1, labels[c]);
      if (z_idx && c == *z_idx) {
        zvec[static_cast<Eigen::Index>(r)] = v;
      } else {
        values(static_cast<Eigen::Index>(q++), static_cast<Eigen::Index>(r)) = v;
      }
    }
  }

  std::vector<std::string> panel_labels;
  for (std::size_t c = 0; c < ncols; ++c) {
    if (!z_idx || c != *z_idx) panel_labels.push_back(labels[c]);
  }

  LoadedPanel out;
  out.panel = make_panel(std::move(values), std::move(panel_labels));
  if (z_idx) {
    out.z = make_threshold_series(std::move(zvec), labels[*z_idx]);
  }
  return out;
}

ThresholdSeries cross_sectional_sd(const PanelSeries& panel, int lag) {
  const Eigen::Index p = panel.p(), n = panel.n();
  if (lag < 1) throw input_error("lag must be >= 1");
  if (p < 2) throw input_error("cross-sectional sd needs at least 2 series");
  if (lag >= n) throw input_error("lag must be < n");
  Eigen::VectorXd z = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = lag; t < n; ++t) {
    const auto col = panel.values.col(t - lag);
    const double mean = col.mean();
    z[t] = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(p - 1));
  }
  ThresholdSeries out;
  out.z = std::move(z);
  out.label = "csd_lag" + std::to_string(lag);
  return out;
}

ThresholdSeries lag_series(const ThresholdSeries& z, int lag) {
  if (lag < 0) throw input_error("lag must be >= 0");
  if (lag == 0) return z;
  const Eigen::Index n = z.n();
  if (lag >= n) throw input_error("lag must be < n");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = lag; t < n; ++t) out[t] = z.z[t - lag];
  ThresholdSeries res;
  res.z = std::move(out);
  res.label = z.label + "_lag" + std::to_string(lag);
  return res;
}

ThresholdSeries square_series(const ThresholdSeries& z) {
  ThresholdSeries res;
  res.z = z.z.array().square();  // NaN stays NaN
  res.label = z.label + "_sq";
  return res;
}

double sample_quantile(std::vector<double> values, double q) {
  if (q < 0.0 || q > 1.0) throw input_error("quantile must be in [0, 1]");
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) throw input_error("no finite values for quantile");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

} // namespace tfm
