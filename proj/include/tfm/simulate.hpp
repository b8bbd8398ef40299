#pragma once

#include <cstdint>
#include <filesystem>

#include "tfm/screening.hpp"

namespace tfm {

struct FactorAr {
  double coef = 0.9;
  double innovation_sd = 2.0;
};

struct LoadingScheme {
  enum class Kind { independent_uniform, correlated_bivariate };
  Kind kind = Kind::independent_uniform;
  double d = 0.0;  // target distance for the bivariate scheme (k0 = 1 only)
};

struct ThresholdProcess {
  enum class Kind { ar1, iid_normal, cross_sectional_sd };
  Kind kind = Kind::ar1;
  double coef = 0.3;
  double sd = 1.0;
  int lag = 1;  // for cross_sectional_sd
};

/// Full description of a simulated two-regime data-generating process.
/// Loadings with strength delta_i are drawn from U[-p^{-delta_i/2},
/// p^{-delta_i/2}]; noise is equicorrelated with off-diagonal correlation
/// 0.5 and the given variance. The same seed reproduces the same data
/// bit for bit.
struct DgpSpec {
  int p = 20;
  int n = 200;
  int k0 = 1;
  std::vector<FactorAr> factor_ar;  // size k0
  std::pair<double, double> strengths{0.0, 0.0};
  LoadingScheme loading;
  double noise_variance = 1.0;  // 0 disables noise entirely
  ThresholdProcess threshold;
  double r0 = 0.0;
  std::uint64_t seed = 0;
  bool burn_in = false;  // 500-step warm-up instead of stationary init
};

struct DgpTruth {
  Eigen::MatrixXd a1, a2;  // p x k0 loading matrices
  double r0 = 0.0;
  Eigen::MatrixXd x;  // k0 x n latent factor path
  std::vector<int> regime_of_t;
};

struct GeneratedData {
  PanelSeries panel;
  ThresholdSeries z;
  DgpTruth truth;
};

GeneratedData generate_dgp(const DgpSpec& spec);

DgpSpec parse_dgp_spec(const std::filesystem::path& path);
DgpSpec parse_dgp_spec_json(const std::string& text);
std::string dgp_spec_to_json(const DgpSpec& spec);

/// What each Monte Carlo replication runs on top of the generated data.
struct PipelineConfig {
  double eta_lo_quantile = 0.30;
  double eta_hi_quantile = 0.70;
  int h0 = 1;
  std::optional<int> forced_k;
  int R = 0;                  // 0 -> max(1, p/2)
  int threshold_var_lag = 0;  // > 0 fits with the lagged (misspecified) z
  bool k_only = false;        // only estimate the factor count
  bool screening = false;     // classify + rank lags 0..screen_max_lag of z
  int screening_k = 0;        // classifier k; 0 -> true k0
  int screen_max_lag = 3;
  int min_tail_count = 20;
  int workers = 0;  // 0 -> TFM_WORKERS env or hardware concurrency
};

struct McRecord {
  int rep = 0;
  bool ok = false;
  std::string error;
  double r_hat = std::numeric_limits<double>::quiet_NaN();
  int k_hat = 0;
  double abs_r_err = std::numeric_limits<double>::quiet_NaN();
  bool below = false;  // r_hat < r0
  double d_err1 = std::numeric_limits<double>::quiet_NaN();
  double d_err2 = std::numeric_limits<double>::quiet_NaN();
  double d_q1_q2 = std::numeric_limits<double>::quiet_NaN();
  int true_rank = 0;  // screening mode: rank of the true variable
  double runtime_s = 0.0;
};

struct McSummary {
  std::vector<McRecord> records;
  int n_rep = 0;
  int n_failed = 0;
  std::uint64_t seed = 0;
  std::string spec_digest;

  double mean_abs_r_err = std::numeric_limits<double>::quiet_NaN();
  double mean_abs_r_err_below = std::numeric_limits<double>::quiet_NaN();
  double mean_abs_r_err_above = std::numeric_limits<double>::quiet_NaN();
  double freq_below = std::numeric_limits<double>::quiet_NaN();
  double freq_k_correct = std::numeric_limits<double>::quiet_NaN();
  double mean_d1 = std::numeric_limits<double>::quiet_NaN();
  double mean_d2 = std::numeric_limits<double>::quiet_NaN();
  double mean_d1_below = std::numeric_limits<double>::quiet_NaN();
  double mean_d1_above = std::numeric_limits<double>::quiet_NaN();
  double mean_d2_below = std::numeric_limits<double>::quiet_NaN();
  double mean_d2_above = std::numeric_limits<double>::quiet_NaN();
  double mean_d_q1q2 = std::numeric_limits<double>::quiet_NaN();
  double sd_d_q1q2 = std::numeric_limits<double>::quiet_NaN();
  double freq_true_first = std::numeric_limits<double>::quiet_NaN();
  double total_runtime_s = 0.0;

  /// Canonical serialization; byte-identical across worker counts.
  std::string to_tsv() const;
};

/// Replication r uses a stream derived from (spec.seed, r), so results do
/// not depend on the worker count. Individual replication failures are
/// recorded, not fatal.
McSummary run_monte_carlo(const DgpSpec& spec, int n_rep,
                          const PipelineConfig& config = {});

/// Prebuilt specs for the four simulation studies shipped with the CLI.
DgpSpec example1_spec(int setting, int n, int p, std::uint64_t seed);
DgpSpec example2_spec(int setting, int n, int p, std::uint64_t seed);
DgpSpec example3_spec(int setting, int n, int p, std::uint64_t seed);
DgpSpec example4_spec(double d, int n, int p, std::uint64_t seed);

struct McTable {
  std::string name;
  std::vector<std::string> meta;     // key\tvalue lines
  std::vector<std::string> columns;  // first column is the row descriptor
  std::vector<std::vector<std::string>> rows;
};

std::string to_tsv(const McTable& table);

/// Runs the full study for one example and returns its summary tables.
/// quick = 20 replications on the smallest (n, p) cell per table.
std::vector<McTable> replicate_example(int example_id, bool quick,
                                       std::uint64_t seed = 20240801,
                                       int workers = 0);

/// Counter-derived child seed; identical in serial and parallel runs.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

} // namespace tfm
