#pragma once

#include <optional>
#include <utility>

#include "tfm/subspace.hpp"

namespace tfm {

/// G-hat evaluated over the candidate grid: the distinct usable z values
/// strictly inside (eta1, eta2), in increasing order.
struct ObjectiveProfile {
  std::vector<double> grid;
  std::vector<double> values;
  std::size_t argmin_index = 0;

  double r_hat() const { return grid[argmin_index]; }
};

/// G(r) = sum_i || B_i' M_i(r) B_i ||_2 with the full-sample split at
/// r1 = r2 = r. Recomputes everything from scratch; this is the reference
/// path the optimized grid sweep is checked against.
double objective_g(const PanelSeries& panel, const ThresholdSeries& z,
                   const Subspace& b1, const Subspace& b2, double r, int h0);

/// Evaluates G-hat at every candidate and returns the profile; ties in the
/// minimum break toward the smaller r. Uses incremental partition updates
/// across the sorted grid, equivalent to objective_g at every point.
ObjectiveProfile estimate_threshold(const PanelSeries& panel,
                                    const ThresholdSeries& z,
                                    const Subspace& b1, const Subspace& b2,
                                    std::pair<double, double> eta, int h0);

struct FitConfig {
  double eta_lo_quantile = 0.30;
  double eta_hi_quantile = 0.70;
  int h0 = 1;
  std::optional<int> k;  // number of factors; estimated when absent
  int R = 0;             // ratio search bound; 0 -> max(1, p/2)
  int min_tail_count = 20;  // tails smaller than this only warn
};

struct FitDiagnostics {
  double space_distance = 0.0;  // D(Q1, Q2) at r_hat
  Eigen::VectorXd top_eigenvalues_1;
  Eigen::VectorXd top_eigenvalues_2;
  int n_regime1 = 0;  // sample counts at r_hat
  int n_regime2 = 0;
  std::vector<std::string> warnings;
};

struct ThresholdFactorFit {
  int k_hat = 0;
  double r_hat = 0.0;
  Subspace q1, q2;          // loading spaces at r_hat
  Subspace b1_eta, b2_eta;  // complements estimated on the (eta1, eta2) tails
  ObjectiveProfile profile;
  std::pair<double, double> eta{0.0, 0.0};  // resolved eta values
  int h0 = 1;
  std::optional<FactorCountEstimate> k_selection;  // present when k estimated
  FitDiagnostics diagnostics;
};

/// Full pipeline: tail complements -> factor count -> threshold grid search
/// -> final loading spaces on the full split at r_hat.
ThresholdFactorFit fit_threshold_factor_model(const PanelSeries& panel,
                                              const ThresholdSeries& z,
                                              const FitConfig& config = {});

struct SignalRecovery {
  Eigen::MatrixXd s_hat;        // p x n, projection of y_t onto its regime's loading space
  Eigen::MatrixXd factors;      // k x n, Q_i' y_t
  std::vector<int> regime_of_t; // 1, 2, or 0 when z_t is unusable
};

SignalRecovery recover_signal_factors(const ThresholdFactorFit& fit,
                                      const PanelSeries& panel,
                                      const ThresholdSeries& z);

} // namespace tfm
