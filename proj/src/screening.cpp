#include "tfm/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfm/errors.hpp"

namespace tfm {

namespace {

// Leading eigenvector of the second-moment matrix (1/n) Y Y', sign-fixed.
Eigen::VectorXd first_pc_direction(const PanelSeries& panel) {
  const Eigen::MatrixXd second_moment =
      panel.values * panel.values.transpose() / static_cast<double>(panel.n());
  EigenPairs top = top_eigenpairs(0.5 * (second_moment + second_moment.transpose()), 1);
  return top.vectors.col(0);
}

} // namespace

RegimeLabels classify_regimes(const PanelSeries& panel, int k,
                              const ClassifyConfig& config) {
  const Eigen::Index p = panel.p(), n = panel.n();
  if (k < 1 || k >= p) throw input_error("classifier needs 1 <= k < p");
  if (n < 4) throw input_error("classifier needs at least 4 time points");
  if (config.max_iter < 1) throw input_error("max_iter must be >= 1");

  RegimeLabels out;
  out.method = "alternating-projection";
  out.labels.resize(static_cast<std::size_t>(n));

  const Eigen::VectorXd pc = first_pc_direction(panel);
  for (Eigen::Index t = 0; t < n; ++t) {
    out.labels[static_cast<std::size_t>(t)] = pc.dot(panel.values.col(t)) < 0.0 ? 1 : 2;
  }

  Subspace q1, q2;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    out.iterations = iter;
    const RegimePartition part = RegimePartition::from_labels(out.labels);
    if (part.count_one() == 0 || part.count_two() == 0) {
      out.degenerate = true;
      return out;
    }
    try {
      q1 = estimate_loading_space(build_m_matrix(panel, part, config.h0, 1), k);
      q2 = estimate_loading_space(build_m_matrix(panel, part, config.h0, 2), k);
    } catch (const numeric_error&) {
      out.degenerate = true;  // a class carries no lagged signal
      return out;
    }

    // Equal priors: assign t to the class with the smaller projection
    // residual, i.e. the larger captured energy. Exact ties keep the
    // current label so the iteration cannot oscillate.
    bool changed = false;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double e1 = (q1.basis.transpose() * panel.values.col(t)).squaredNorm();
      const double e2 = (q2.basis.transpose() * panel.values.col(t)).squaredNorm();
      int label = out.labels[static_cast<std::size_t>(t)];
      if (e1 > e2) label = 1;
      else if (e2 > e1) label = 2;
      if (label != out.labels[static_cast<std::size_t>(t)]) {
        out.labels[static_cast<std::size_t>(t)] = label;
        changed = true;
      }
    }
    if (!changed) {
      out.converged = true;
      break;
    }
  }

  const int c1 = static_cast<int>(std::count(out.labels.begin(), out.labels.end(), 1));
  if (c1 == 0 || c1 == n) {
    out.degenerate = true;
  } else if (out.converged && subspace_distance(q1, q2) <= 1e-6) {
    out.degenerate = true;  // classes found, but their spaces coincide
  }
  return out;
}

void align_labels(RegimeLabels& labels, const ThresholdSeries& z) {
  if (static_cast<Eigen::Index>(labels.labels.size()) != z.n()) {
    throw input_error("label/series length mismatch");
  }
  double sum[2] = {0.0, 0.0};
  int count[2] = {0, 0};
  for (std::size_t t = 0; t < labels.labels.size(); ++t) {
    const double v = z.z[static_cast<Eigen::Index>(t)];
    if (!std::isfinite(v)) continue;
    sum[labels.labels[t] - 1] += v;
    ++count[labels.labels[t] - 1];
  }
  if (count[0] == 0 || count[1] == 0) return;
  if (sum[0] / count[0] > sum[1] / count[1]) {
    for (auto& l : labels.labels) l = 3 - l;
  }
}

CusumResult cusum_q(const RegimeLabels& labels, const ThresholdSeries& z,
                    std::pair<double, double> quantile_band) {
  if (static_cast<Eigen::Index>(labels.labels.size()) != z.n()) {
    throw input_error("label/series length mismatch");
  }
  if (!(quantile_band.first > 0.0 && quantile_band.first < quantile_band.second &&
        quantile_band.second < 1.0)) {
    throw input_error("quantile band must satisfy 0 < lo < hi < 1");
  }

  // Usable time points sorted by z; s_t = 2(I_t - 1.5) in {-1, +1}.
  std::vector<Eigen::Index> order;
  for (Eigen::Index t = 0; t < z.n(); ++t) {
    if (std::isfinite(z.z[t])) order.push_back(t);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return z.z[a] < z.z[b]; });
  const std::size_t m = order.size();
  if (m == 0) throw input_error("threshold series has no usable entries");
  if (z.z[order.front()] == z.z[order.back()]) {
    throw config_error("all usable z values are identical; no interior candidate");
  }

  std::vector<double> vals;
  vals.reserve(m);
  for (auto t : order) vals.push_back(z.z[t]);
  const double lo = sample_quantile(vals, quantile_band.first);
  const double hi = sample_quantile(vals, quantile_band.second);

  long long total = 0;
  for (auto t : order) total += labels.labels[static_cast<std::size_t>(t)] == 2 ? 1 : -1;

  // For a candidate r, S(r) = total - 2 * sum of s_t over {z_t < r}. Walk
  // the sorted order once; candidates are the distinct observed values in
  // the band. Integer arithmetic throughout: the fast path must agree with
  // brute force exactly.
  CusumResult best;
  bool found = false;
  long long best_abs = -1;
  long long prefix = 0;  // sum of s_t over z_t < current candidate
  std::size_t idx = 0;
  while (idx < m) {
    const double r = z.z[order[idx]];
    if (r >= lo && r <= hi) {
      const long long s = total - 2 * prefix;
      const long long a = s < 0 ? -s : s;
      if (a > best_abs) {  // strict: ties keep the smallest r
        best_abs = a;
        best.argmax_r = r;
        found = true;
      }
    }
    // consume the whole block of duplicates
    while (idx < m && z.z[order[idx]] == r) {
      prefix += labels.labels[static_cast<std::size_t>(order[idx])] == 2 ? 1 : -1;
      ++idx;
    }
  }
  if (!found) {
    throw config_error("no z candidates inside the quantile band");
  }
  best.q_value = static_cast<double>(best_abs);
  return best;
}

ScreeningReport screen_candidates(const RegimeLabels& labels,
                                  const std::vector<ThresholdSeries>& candidates,
                                  std::size_t top_m,
                                  std::pair<double, double> quantile_band) {
  if (candidates.empty()) throw input_error("candidate list is empty");
  ScreeningReport report;
  report.entries.reserve(candidates.size());
  for (const auto& cand : candidates) {
    const CusumResult res = cusum_q(labels, cand, quantile_band);
    report.entries.push_back({cand.label, res.q_value, res.argmax_r});
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const ScreeningEntry& a, const ScreeningEntry& b) {
                     return a.q_value > b.q_value;
                   });
  if (report.entries.size() > top_m) report.entries.resize(top_m);
  return report;
}

double model_compare_e(const PanelSeries& panel, const ThresholdSeries& z,
                       int t0, const FitConfig& config) {
  const Eigen::Index n = panel.n();
  if (t0 < 4 || t0 >= n) throw input_error("t0 must satisfy 4 <= t0 < n");

  PanelSeries train = make_panel(panel.values.leftCols(t0),
                                 panel.series_labels);
  ThresholdSeries ztrain = make_threshold_series(z.z.head(t0), z.label);
  const ThresholdFactorFit fit = fit_threshold_factor_model(train, ztrain, config);

  // Complements re-derived from the training M matrices at the fitted
  // threshold, then scored on the held-out block.
  const RegimePartition split = make_partition(ztrain, fit.r_hat, fit.r_hat);
  const Subspace b1 = complement_space(build_m_matrix(train, split, fit.h0, 1), fit.k_hat);
  const Subspace b2 = complement_space(build_m_matrix(train, split, fit.h0, 2), fit.k_hat);

  double e = 0.0;
  for (Eigen::Index t = t0; t < n; ++t) {
    const double v = z.z[t];
    if (!std::isfinite(v)) continue;
    const Subspace& b = v < fit.r_hat ? b1 : b2;
    e += (b.basis.transpose() * panel.values.col(t)).squaredNorm();
  }
  return e;
}

int estimate_num_factors_one_regime(const PanelSeries& panel, int h0, int R) {
  const Eigen::Index p = panel.p();
  if (R <= 0) R = std::max(1, static_cast<int>(p / 2));
  std::vector<int> all_one(static_cast<std::size_t>(panel.n()), 1);
  const RegimePartition part = RegimePartition::from_labels(all_one);
  const MMatrix m = build_m_matrix(panel, part, h0, 1);
  const FactorCountEstimate est = estimate_num_factors(m, m, R);
  return est.k_hat;
}

} // namespace tfm
