#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tfm {

/// Observed p x n panel: column t holds the cross-section y_t.
struct PanelSeries {
  Eigen::MatrixXd values;                  // p rows (series) x n columns (time)
  std::vector<std::string> series_labels;  // size p
  std::vector<std::int64_t> time_index;    // size n, strictly increasing

  Eigen::Index p() const { return values.rows(); }
  Eigen::Index n() const { return values.cols(); }
};

/// Validates dimensions and finiteness; fills default labels/time index.
PanelSeries make_panel(Eigen::MatrixXd values,
                       std::vector<std::string> labels = {});

/// Threshold-variable series z_t. Entries that are not defined (e.g. the
/// first `lag` positions of a derived series) are stored as NaN and are
/// excluded from candidate grids and partitions downstream.
struct ThresholdSeries {
  Eigen::VectorXd z;
  std::string label;

  Eigen::Index n() const { return z.size(); }
  // Index of the first finite entry (== n when none).
  Eigen::Index first_usable() const;
  bool usable(Eigen::Index t) const { return std::isfinite(z[t]); }
  std::vector<double> usable_values() const;
};

ThresholdSeries make_threshold_series(Eigen::VectorXd z, std::string label);

/// Two-regime indicator pair for a tentative split (r1 <= r2):
/// in_one[t] = I(z_t < r1), in_two[t] = I(z_t >= r2). A value equal to the
/// threshold goes to regime 2; with r1 < r2 the gap (r1, r2) belongs to
/// neither regime, as do unusable (NaN) entries.
struct RegimePartition {
  double r1 = 0.0;
  double r2 = 0.0;
  std::vector<bool> in_one;
  std::vector<bool> in_two;

  Eigen::Index n() const { return static_cast<Eigen::Index>(in_one.size()); }
  int count_one() const;
  int count_two() const;

  // Indicator pair driven directly by class labels in {1,2} rather than a
  // threshold; used by the regime classifier. r1/r2 are set to NaN.
  static RegimePartition from_labels(const std::vector<int>& labels);
};

RegimePartition make_partition(const ThresholdSeries& z, double r1, double r2);

struct LoadOptions {
  char delimiter = ',';
  bool has_header = true;
  std::optional<std::string> z_column;
};

struct LoadedPanel {
  PanelSeries panel;
  std::optional<ThresholdSeries> z;
};

/// Reads a delimited text table, one row per time point, one column per
/// series. Rejects ragged rows and non-finite cells, reporting the offending
/// position. When options.z_column names a column, it is split out as the
/// threshold series. Columns are labeled col1..colN when no header is given.
LoadedPanel load_panel(const std::filesystem::path& path,
                       const LoadOptions& options = {});

/// z_t = cross-sectional standard deviation of y_{t-lag}; the first `lag`
/// entries are unusable (NaN).
ThresholdSeries cross_sectional_sd(const PanelSeries& panel, int lag);

/// Shifts a series by `lag` positions (z_t -> z_{t-lag}); the first `lag`
/// entries become unusable. lag = 0 returns a copy.
ThresholdSeries lag_series(const ThresholdSeries& z, int lag);

/// Elementwise square, keeping unusable entries unusable.
ThresholdSeries square_series(const ThresholdSeries& z);

/// Type-7 (linear interpolation) sample quantile of the given values,
/// q in [0, 1]. Values need not be sorted; non-finite entries are ignored.
double sample_quantile(std::vector<double> values, double q);

} // namespace tfm
