#pragma once

#include "tfm/threshold.hpp"

namespace tfm {

struct ClassifyConfig {
  int max_iter = 50;
  int h0 = 1;
};

/// Per-time regime assignments from the threshold-free classifier. Labels
/// are identified only up to the global swap 1<->2; everything downstream
/// is swap-invariant.
struct RegimeLabels {
  std::vector<int> labels;  // values in {1, 2}
  std::string method;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // collapsed to one class or indistinguishable spaces
};

/// Alternating classifier: given labels, estimate per-class loading spaces
/// from within-class lagged moments; given spaces, relabel each t to the
/// class with the smaller projection residual (equal priors). Initialized
/// from the sign of the first principal component score.
RegimeLabels classify_regimes(const PanelSeries& panel, int k,
                              const ClassifyConfig& config = {});

/// Cosmetic determinism only: swaps labels so class 1 has the smaller mean z.
void align_labels(RegimeLabels& labels, const ThresholdSeries& z);

struct CusumResult {
  double q_value = 0.0;  // integer-valued; at most the number of usable t
  double argmax_r = 0.0;
};

/// Q = max_r | sum_t 2(I_t - 1.5)(2 I(z_t >= r) - 1) |, the maximum taken
/// over observed z values inside the quantile band (the unrestricted max is
/// degenerate at the boundary). O(n log n) via sorting and prefix sums.
CusumResult cusum_q(const RegimeLabels& labels, const ThresholdSeries& z,
                    std::pair<double, double> quantile_band = {0.10, 0.90});

struct ScreeningEntry {
  std::string label;
  double q_value = 0.0;
  double argmax_r = 0.0;
};

/// Entries ranked by q_value descending; input order breaks ties.
struct ScreeningReport {
  std::vector<ScreeningEntry> entries;
};

ScreeningReport screen_candidates(
    const RegimeLabels& labels, const std::vector<ThresholdSeries>& candidates,
    std::size_t top_m = static_cast<std::size_t>(-1),
    std::pair<double, double> quantile_band = {0.10, 0.90});

/// Cross-validated residual criterion: fit on t = 1..t0, then sum the
/// squared complement projections of the held-out observations under the
/// fitted threshold. Smaller is better.
double model_compare_e(const PanelSeries& panel, const ThresholdSeries& z,
                       int t0, const FitConfig& config = {});

/// One-regime eigenvalue-ratio estimate of the number of factors, used to
/// pick a working k for screening when none is supplied (an overestimate
/// is harmless here).
int estimate_num_factors_one_regime(const PanelSeries& panel, int h0, int R);

} // namespace tfm
