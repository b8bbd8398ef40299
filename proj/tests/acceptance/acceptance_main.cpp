// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Optional argument restricts the run to one criterion id.

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tfm/screening.hpp"
#include "tfm/simulate.hpp"

using namespace tfm;

namespace {

struct Check {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail += (detail.empty() ? "" : "; ") + what + (ok ? " ok" : " FAILED");
  }
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

ThresholdSeries series(Eigen::VectorXd v, std::string label = "z") {
  return make_threshold_series(std::move(v), std::move(label));
}

Eigen::MatrixXd random_orthogonal(int k, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(k, k);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

Subspace orthonormal_subspace(int p, int k, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(p, k);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return span_of(a);
}

Subspace true_complement(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd full =
      qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.rows());
  Subspace s;
  s.basis = full.rightCols(a.rows() - a.cols());
  return s;
}

PipelineConfig pipeline_with_k(int k) {
  PipelineConfig cfg;
  cfg.forced_k = k;
  return cfg;
}

// ---------------------------------------------------------------------------
// criterion 1: invariant battery
// ---------------------------------------------------------------------------
Check invariant_suite() {
  Check c;
  std::mt19937 rng(1);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  bool orthonormal_ok = true, psd_ok = true, sym_ok = true;
  bool metric_ok = true, g_ok = true, cusum_ok = true, contraction_ok = true;

  for (int trial = 0; trial < 12; ++trial) {
    const int p = 4 + trial % 5;
    const int n = 80 + 10 * trial;
    Eigen::MatrixXd y(p, n);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
    for (int t = 0; t < n; ++t) z[t] = unif(rng);
    const PanelSeries panel = make_panel(y);
    const ThresholdSeries zs = series(z);
    const RegimePartition part = make_partition(zs, 0.0, 0.0);

    for (int regime : {1, 2}) {
      const MMatrix m = build_m_matrix(panel, part, 1 + trial % 2, regime);
      sym_ok = sym_ok && (m.matrix - m.matrix.transpose()).norm() == 0.0;
      const EigenPairs pairs = top_eigenpairs(m.matrix, p);
      psd_ok = psd_ok && pairs.values.minCoeff() >= -1e-10 * pairs.values[0];
      for (int k : {1, p - 1}) {
        const Subspace q = estimate_loading_space(m, k);
        const Subspace b = complement_space(m, k);
        orthonormal_ok = orthonormal_ok &&
            (q.basis.transpose() * q.basis -
             Eigen::MatrixXd::Identity(k, k)).norm() <= 1e-10 &&
            (b.basis.transpose() * b.basis -
             Eigen::MatrixXd::Identity(p - k, p - k)).norm() <= 1e-10;
      }
    }

    // distance metric properties and orthogonal invariance
    const Subspace s1 = orthonormal_subspace(p, 2, 100 + trial);
    const Subspace s2 = orthonormal_subspace(p, std::min(3, p - 1), 200 + trial);
    const double d12 = subspace_distance(s1, s2);
    Subspace rot = s2;
    rot.basis = s2.basis * random_orthogonal(static_cast<int>(s2.dim()), 300 + trial);
    metric_ok = metric_ok && d12 >= 0.0 && d12 <= 1.0 &&
        std::abs(subspace_distance(s2, s1) - d12) <= 1e-10 &&
        subspace_distance(s1, s1) <= 1e-7 &&
        std::abs(subspace_distance(s1, rot) - d12) <= 1e-10;

    // objective: non-negative over the grid, invariant under B -> BV
    const int k = 1;
    const Subspace b1 = orthonormal_subspace(p, p - k, 400 + trial);
    const Subspace b2 = orthonormal_subspace(p, p - k, 500 + trial);
    const ObjectiveProfile profile = estimate_threshold(panel, zs, b1, b2, {-0.5, 0.5}, 1);
    for (double v : profile.values) g_ok = g_ok && v >= 0.0;
    Subspace b1r = b1, b2r = b2;
    b1r.basis = b1.basis * random_orthogonal(p - k, 600 + trial);
    b2r.basis = b2.basis * random_orthogonal(p - k, 700 + trial);
    const double g_a = objective_g(panel, zs, b1, b2, profile.grid[0], 1);
    const double g_b = objective_g(panel, zs, b1r, b2r, profile.grid[0], 1);
    g_ok = g_ok && std::abs(g_a - g_b) <= 1e-10 * std::max(1.0, g_a);

    // CUSUM invariances
    std::vector<int> labels(static_cast<std::size_t>(n)), swapped(labels.size());
    std::uniform_int_distribution<int> coin(1, 2);
    for (std::size_t t = 0; t < labels.size(); ++t) {
      labels[t] = coin(rng);
      swapped[t] = 3 - labels[t];
    }
    RegimeLabels lab, lab_swap;
    lab.labels = labels;
    lab_swap.labels = swapped;
    const double q0 = cusum_q(lab, zs).q_value;
    cusum_ok = cusum_ok && cusum_q(lab_swap, zs).q_value == q0 &&
        cusum_q(lab, series(z.array().exp())).q_value == q0 &&
        cusum_q(lab, series(2.0 * z.array() + 0.5)).q_value == q0;
  }

  // projection contraction on a fitted model
  {
    const GeneratedData data = generate_dgp(example1_spec(1, 300, 10, 42));
    FitConfig fc;
    fc.k = 1;
    const ThresholdFactorFit fit = fit_threshold_factor_model(data.panel, data.z, fc);
    const SignalRecovery rec = recover_signal_factors(fit, data.panel, data.z);
    for (Eigen::Index t = 0; t < data.panel.n(); ++t) {
      contraction_ok = contraction_ok &&
          rec.s_hat.col(t).norm() <= data.panel.values.col(t).norm() * (1.0 + 1e-12);
    }
  }

  c.require(orthonormal_ok, "subspace orthonormality <= 1e-10");
  c.require(sym_ok, "M symmetry");
  c.require(psd_ok, "M positive semi-definite");
  c.require(metric_ok, "distance metric properties");
  c.require(g_ok, "objective >= 0 and orthogonal-invariant");
  c.require(cusum_ok, "CUSUM swap/monotone invariance");
  c.require(contraction_ok, "projection contraction");
  return c;
}

// ---------------------------------------------------------------------------
// criterion 2: noiseless exactness
// ---------------------------------------------------------------------------
Check noiseless_exactness() {
  Check c;
  // Noise-free two-factor, two-regime data. z takes values on a grid of
  // atoms with r0 in a gap, so the fitted sample split is exact and both
  // in-sample and held-out projections annihilate the signal.
  std::mt19937 rng(4242);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> atom(0, 9);
  const int p = 10, n = 600, k0 = 2;
  const double r0 = 0.0;
  Eigen::MatrixXd a1(p, k0), a2(p, k0), x(k0, n);
  for (Eigen::Index i = 0; i < a1.size(); ++i) a1.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < a2.size(); ++i) a2.data()[i] = normal(rng);
  x.col(0) << 2.0 * normal(rng), 2.0 * normal(rng);
  for (int t = 1; t < n; ++t) {
    x(0, t) = 0.9 * x(0, t - 1) + 2.0 * normal(rng);
    x(1, t) = 0.8 * x(1, t - 1) + 2.0 * normal(rng);
  }
  Eigen::MatrixXd y(p, n);
  Eigen::VectorXd z(n);
  for (int t = 0; t < n; ++t) {
    z[t] = -0.9 + 0.2 * atom(rng);  // atoms -0.9, -0.7, ..., 0.9
    y.col(t) = (z[t] < r0 ? a1 : a2) * x.col(t);
  }
  const PanelSeries panel = make_panel(std::move(y));
  const ThresholdSeries zs = series(std::move(z));

  const Subspace b1 = true_complement(a1);
  const Subspace b2 = true_complement(a2);
  const ObjectiveProfile profile = estimate_threshold(panel, zs, b1, b2, {-0.6, 0.6}, 1);
  const double g_r0 = objective_g(panel, zs, b1, b2, r0, 1);
  const double g_max = *std::max_element(profile.values.begin(), profile.values.end());
  c.require(g_max > 0.0 && g_r0 <= 1e-10 * g_max,
            "G(r0)=" + num(g_r0) + " <= 1e-10 * max G=" + num(g_max));

  FitConfig fc;
  fc.k = k0;
  const ThresholdFactorFit fit = fit_threshold_factor_model(panel, zs, fc);
  const double d1 = subspace_distance(fit.q1, span_of(a1));
  const double d2 = subspace_distance(fit.q2, span_of(a2));
  c.require(d1 <= 1e-8 && d2 <= 1e-8,
            "D(Q_i, A_i) = " + num(d1) + ", " + num(d2) + " <= 1e-8");

  const SignalRecovery rec = recover_signal_factors(fit, panel, zs);
  const double rel = (rec.s_hat - panel.values).norm() / panel.values.norm();
  c.require(rel <= 1e-10, "signal recovery relative error " + num(rel) + " <= 1e-10");

  const double e = model_compare_e(panel, zs, 300, fc);
  double heldout = 0.0;
  for (Eigen::Index t = 300; t < 600; ++t) heldout += panel.values.col(t).squaredNorm();
  c.require(e <= 1e-8 * heldout, "held-out E " + num(e) + " <= 1e-8 * " + num(heldout));
  return c;
}

// ---------------------------------------------------------------------------
// criterion 3: oracle equivalence
// ---------------------------------------------------------------------------
Check oracle_equivalence() {
  Check c;
  std::mt19937 rng(3);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> coin(1, 2);
  std::uniform_int_distribution<int> ztick(-5, 5);

  // fast CUSUM vs quadratic brute force, exact
  bool cusum_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + 3 * trial;
    Eigen::VectorXd z(n);
    RegimeLabels lab;
    lab.labels.resize(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      z[t] = 0.5 * ztick(rng);
      lab.labels[static_cast<std::size_t>(t)] = coin(rng);
    }
    if (z.minCoeff() == z.maxCoeff()) z[0] += 1.0;
    const ThresholdSeries zs = series(z);
    const CusumResult fast = cusum_q(lab, zs);

    std::vector<double> usable = zs.usable_values();
    const double lo = sample_quantile(usable, 0.10);
    const double hi = sample_quantile(usable, 0.90);
    std::sort(usable.begin(), usable.end());
    usable.erase(std::unique(usable.begin(), usable.end()), usable.end());
    long long best = -1;
    double best_r = 0.0;
    for (double r : usable) {
      if (r < lo || r > hi) continue;
      long long s = 0;
      for (int t = 0; t < n; ++t) {
        s += (lab.labels[static_cast<std::size_t>(t)] == 2 ? 1 : -1) *
             (z[t] >= r ? 1 : -1);
      }
      if (std::abs(s) > best) {
        best = std::abs(s);
        best_r = r;
      }
    }
    cusum_ok = cusum_ok && fast.q_value == static_cast<double>(best) &&
               fast.argmax_r == best_r;
  }
  c.require(cusum_ok, "fast CUSUM == brute force on 50 instances");

  // optimized grid sweep vs from-scratch composition, 1e-12 relative
  bool sweep_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 3 + trial % 6, n = 50 + 4 * trial, h0 = 1 + trial % 3;
    const int k = 1 + trial % 2;
    Eigen::MatrixXd y(p, n);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
    for (int t = 0; t < n; ++t) z[t] = normal(rng);
    const PanelSeries panel = make_panel(y);
    const ThresholdSeries zs = series(z);
    const Subspace b1 = orthonormal_subspace(p, p - k, 800 + trial);
    const Subspace b2 = orthonormal_subspace(p, p - k, 900 + trial);
    const ObjectiveProfile profile = estimate_threshold(panel, zs, b1, b2, {-0.8, 0.8}, h0);
    for (std::size_t i = 0; i < profile.grid.size(); ++i) {
      Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(p, p), m2 = m1;
      const RegimePartition part = make_partition(zs, profile.grid[i], profile.grid[i]);
      for (int h = 1; h <= h0; ++h) {
        for (int j = 1; j <= 2; ++j) {
          const Eigen::MatrixXd sa = cross_moment(panel, part, h, 1, j).matrix;
          const Eigen::MatrixXd sb = cross_moment(panel, part, h, 2, j).matrix;
          m1 += sa * sa.transpose();
          m2 += sb * sb.transpose();
        }
      }
      double brute = 0.0;
      for (int regime : {1, 2}) {
        const Subspace& b = regime == 1 ? b1 : b2;
        Eigen::MatrixXd proj =
            b.basis.transpose() * (regime == 1 ? m1 : m2) * b.basis;
        proj = 0.5 * (proj + proj.transpose());
        brute += std::max(
            0.0, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(proj, Eigen::EigenvaluesOnly)
                     .eigenvalues()
                     .maxCoeff());
      }
      const double scale = std::max({profile.values[i], brute, 1e-300});
      sweep_ok = sweep_ok && std::abs(profile.values[i] - brute) <= 1e-12 * scale;
    }
  }
  c.require(sweep_ok, "grid sweep == from-scratch G to 1e-12 relative on 20 instances");

  // eigenpair residuals
  bool resid_ok = true;
  for (int trial = 0; trial < 10; ++trial) {
    const int p = 5 + trial;
    Eigen::MatrixXd a(p, p);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    Eigen::MatrixXd m = a * a.transpose();
    m = 0.5 * (m + m.transpose());
    const EigenPairs pairs = top_eigenpairs(m, p);
    for (int k = 0; k < p; ++k) {
      resid_ok = resid_ok &&
          (m * pairs.vectors.col(k) - pairs.values[k] * pairs.vectors.col(k)).norm() <=
              1e-8 * pairs.values[0];
    }
  }
  c.require(resid_ok, "eigenpair residuals <= 1e-8 * ||M||");
  return c;
}

// shared across criteria 4-6
const McSummary& ex1_s1_n1000() {
  static const McSummary summary =
      run_monte_carlo(example1_spec(1, 1000, 20, 1001), 100, pipeline_with_k(1));
  return summary;
}

Check threshold_error_band() {
  Check c;
  const McSummary& s = ex1_s1_n1000();
  c.require(s.n_failed == 0, "no failed replications");
  c.require(s.mean_abs_r_err >= 0.01 && s.mean_abs_r_err <= 0.04,
            "mean |r_hat - r0| = " + num(s.mean_abs_r_err) + " in [0.01, 0.04]");
  return c;
}

Check threshold_side_frequencies() {
  Check c;
  const McSummary s1 =
      run_monte_carlo(example1_spec(1, 200, 20, 1005), 100, pipeline_with_k(1));
  const McSummary s2 =
      run_monte_carlo(example1_spec(2, 200, 20, 1006), 100, pipeline_with_k(1));
  c.require(s2.freq_below < 0.5,
            "setting 2 freq(r_hat < r0) = " + num(s2.freq_below) + " < 0.5");
  c.require(s1.freq_below >= 0.35 && s1.freq_below <= 0.65,
            "setting 1 freq(r_hat < r0) = " + num(s1.freq_below) + " in [0.35, 0.65]");
  return c;
}

Check loading_error_band() {
  Check c;
  const McSummary& s = ex1_s1_n1000();
  c.require(s.mean_d1 >= 0.01 && s.mean_d1 <= 0.04,
            "regime 1 mean D = " + num(s.mean_d1) + " in [0.01, 0.04]");
  c.require(s.mean_d2 >= 0.01 && s.mean_d2 <= 0.04,
            "regime 2 mean D = " + num(s.mean_d2) + " in [0.01, 0.04]");
  return c;
}

Check factor_count_selection() {
  Check c;
  PipelineConfig cfg;
  cfg.k_only = true;
  for (int p : {20, 40}) {
    const McSummary s = run_monte_carlo(
        example2_spec(1, 1000, p, 1007 + static_cast<std::uint64_t>(p)), 100, cfg);
    c.require(s.freq_k_correct >= 0.90,
              "p=" + std::to_string(p) + " freq(k_hat = 3) = " + num(s.freq_k_correct) +
                  " >= 0.90");
  }
  return c;
}

Check misspecified_k_dichotomy() {
  Check c;
  const McSummary under =
      run_monte_carlo(example2_spec(1, 1000, 20, 1010), 100, pipeline_with_k(2));
  const McSummary over =
      run_monte_carlo(example2_spec(1, 1000, 20, 1011), 100, pipeline_with_k(4));
  c.require(under.mean_abs_r_err > 0.3,
            "k=2 mean |r_hat - r0| = " + num(under.mean_abs_r_err) + " > 0.3");
  c.require(over.mean_abs_r_err < 0.05,
            "k=4 mean |r_hat - r0| = " + num(over.mean_abs_r_err) + " < 0.05");
  return c;
}

Check screening_rank() {
  Check c;
  PipelineConfig cfg;
  cfg.screening = true;
  cfg.screening_k = 3;
  cfg.screen_max_lag = 3;
  const McSummary s = run_monte_carlo(example2_spec(1, 1000, 20, 1012), 100, cfg);
  c.require(s.n_failed == 0, "no failed replications");
  c.require(s.freq_true_first >= 0.95,
            "true variable ranked first in " + num(100 * s.freq_true_first) + "% >= 95%");
  return c;
}

Check space_distance_tracking() {
  Check c;
  for (double d : {0.3, 0.7, 1.0}) {
    const McSummary s = run_monte_carlo(
        example4_spec(d, 1000, 20, 1013 + static_cast<std::uint64_t>(10 * d)), 100,
        pipeline_with_k(1));
    c.require(std::abs(s.mean_d_q1q2 - d) <= 0.05,
              "d=" + num(d) + " mean D(Q1,Q2) = " + num(s.mean_d_q1q2) + " within 0.05");
  }
  return c;
}

Check helping_effect() {
  Check c;
  const McSummary s2 =
      run_monte_carlo(example1_spec(2, 1000, 100, 1015), 100, pipeline_with_k(1));
  const McSummary s3 =
      run_monte_carlo(example1_spec(3, 1000, 100, 1016), 100, pipeline_with_k(1));
  c.require(s2.mean_d2 < s3.mean_d1 && s2.mean_d2 < s3.mean_d2,
            "weak-regime D with a strong partner = " + num(s2.mean_d2) +
                " < both weak-weak errors (" + num(s3.mean_d1) + ", " + num(s3.mean_d2) + ")");
  return c;
}

} // namespace

int main(int argc, char** argv) {
  const std::optional<int> only =
      argc > 1 ? std::optional<int>(std::atoi(argv[1])) : std::nullopt;

  struct Criterion {
    int id;
    const char* label;
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "invariant suite", invariant_suite},
      {2, "noiseless exactness", noiseless_exactness},
      {3, "oracle equivalence", oracle_equivalence},
      {4, "threshold error band (example 1, strong regimes, n=1000)", threshold_error_band},
      {5, "threshold side frequencies (example 1, n=200)", threshold_side_frequencies},
      {6, "loading-space error band (example 1, strong regimes, n=1000)", loading_error_band},
      {7, "factor-count selection rate (example 2, n=1000)", factor_count_selection},
      {8, "under/over-specified k dichotomy (example 2, n=1000)", misspecified_k_dichotomy},
      {9, "threshold-variable screening rank (example 2, n=1000)", screening_rank},
      {10, "between-regime distance tracking (example 4, n=1000)", space_distance_tracking},
      {11, "helping effect for weak regimes (example 1, p=100)", helping_effect},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (only && *only != criterion.id) continue;
    const auto start = std::chrono::steady_clock::now();
    Check result;
    try {
      result = criterion.run();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2d: %s — %s (%.1fs)\n", result.pass ? "PASS" : "FAIL",
                criterion.id, criterion.label, result.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += result.pass ? 0 : 1;
  }
  if (failures == 0) {
    std::printf("acceptance: all criteria passed\n");
  } else {
    std::printf("acceptance: %d criteria FAILED\n", failures);
  }
  return failures;
}
