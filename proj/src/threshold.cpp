#include "tfm/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfm/errors.hpp"

namespace tfm {

namespace {

double spectral_norm_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw numeric_error("symmetric eigendecomposition did not converge");
  }
  return std::max(0.0, solver.eigenvalues().maxCoeff());
}

std::vector<double> candidate_grid(const ThresholdSeries& z,
                                   std::pair<double, double> eta) {
  if (!(eta.first < eta.second)) throw input_error("eta1 must be < eta2");
  std::vector<double> grid;
  for (Eigen::Index t = 0; t < z.n(); ++t) {
    const double v = z.z[t];
    if (std::isfinite(v) && v > eta.first && v < eta.second) grid.push_back(v);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty()) {
    throw config_error("no threshold candidates strictly inside (" +
                       std::to_string(eta.first) + ", " + std::to_string(eta.second) + ")");
  }
  return grid;
}

void check_complement_pair(const PanelSeries& panel, const Subspace& b1,
                           const Subspace& b2, int h0) {
  if (b1.p() != panel.p() || b2.p() != panel.p()) {
    throw input_error("complement bases do not match the panel dimension");
  }
  if (h0 < 1 || h0 >= panel.n()) throw input_error("h0 must satisfy 1 <= h0 < n");
}

// Incremental state for the grid sweep. For each regime i the accumulators
// hold the unnormalized projected cross moments
//   W[i][j][h-1] = sum_t (B_i' y_t) y_{t+h}' I_{t,i}(r) I_{t+h,j}(r),
// so that B_i' M_i(r) B_i = sum_{h,j} (W/(n-h)) (W/(n-h))'. Moving r up the
// sorted grid flips time points from regime 2 to regime 1 one at a time,
// each flip a pair of rank-one updates per affected accumulator.
class GridSweep {
public:
  GridSweep(const PanelSeries& panel, const ThresholdSeries& z,
            const Subspace& b1, const Subspace& b2, int h0, double first_r)
      : y_(panel.values), h0_(h0), n_(panel.n()) {
    gy_[0] = b1.basis.transpose() * y_;
    gy_[1] = b2.basis.transpose() * y_;
    regime_.resize(static_cast<std::size_t>(n_));
    for (Eigen::Index t = 0; t < n_; ++t) {
      const double v = z.z[t];
      regime_[static_cast<std::size_t>(t)] = !std::isfinite(v) ? 0 : (v < first_r ? 1 : 2);
    }
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        acc_[i][j].assign(static_cast<std::size_t>(h0_),
                          Eigen::MatrixXd::Zero(gy_[i].rows(), y_.rows()));
      }
    }
    for (int h = 1; h <= h0_; ++h) {
      for (Eigen::Index t = 0; t + h < n_; ++t) {
        const int i = regime_[static_cast<std::size_t>(t)];
        const int j = regime_[static_cast<std::size_t>(t + h)];
        if (i == 0 || j == 0) continue;
        acc_[i - 1][j - 1][static_cast<std::size_t>(h - 1)].noalias() +=
            gy_[i - 1].col(t) * y_.col(t + h).transpose();
      }
    }
  }

  // Moves time point t from regime 2 into regime 1.
  void flip(Eigen::Index t) {
    for (int h = 1; h <= h0_; ++h) {
      if (t + h < n_) {
        const int j = regime_[static_cast<std::size_t>(t + h)];
        if (j != 0) {
          auto& from = acc_[1][j - 1][static_cast<std::size_t>(h - 1)];
          auto& to = acc_[0][j - 1][static_cast<std::size_t>(h - 1)];
          from.noalias() -= gy_[1].col(t) * y_.col(t + h).transpose();
          to.noalias() += gy_[0].col(t) * y_.col(t + h).transpose();
        }
      }
      if (t - h >= 0) {
        const int i = regime_[static_cast<std::size_t>(t - h)];
        if (i != 0) {
          auto& from = acc_[i - 1][1][static_cast<std::size_t>(h - 1)];
          auto& to = acc_[i - 1][0][static_cast<std::size_t>(h - 1)];
          from.noalias() -= gy_[i - 1].col(t - h) * y_.col(t).transpose();
          to.noalias() += gy_[i - 1].col(t - h) * y_.col(t).transpose();
        }
      }
    }
    regime_[static_cast<std::size_t>(t)] = 1;
  }

  double evaluate() const {
    double g = 0.0;
    for (int i = 0; i < 2; ++i) {
      const Eigen::Index d = gy_[i].rows();
      Eigen::MatrixXd projected = Eigen::MatrixXd::Zero(d, d);
      for (int h = 1; h <= h0_; ++h) {
        const double w = 1.0 / (static_cast<double>(n_ - h) * static_cast<double>(n_ - h));
        for (int j = 0; j < 2; ++j) {
          const auto& a = acc_[i][j][static_cast<std::size_t>(h - 1)];
          projected.noalias() += w * (a * a.transpose());
        }
      }
      g += spectral_norm_psd(projected);
    }
    return g;
  }

private:
  const Eigen::MatrixXd& y_;
  int h0_;
  Eigen::Index n_;
  Eigen::MatrixXd gy_[2];                        // B_i' Y
  std::vector<int> regime_;                      // 0 = unusable
  std::array<std::array<std::vector<Eigen::MatrixXd>, 2>, 2> acc_;
};

} // namespace

double objective_g(const PanelSeries& panel, const ThresholdSeries& z,
                   const Subspace& b1, const Subspace& b2, double r, int h0) {
  check_complement_pair(panel, b1, b2, h0);
  if (z.n() != panel.n()) throw input_error("threshold series length does not match panel");
  const RegimePartition part = make_partition(z, r, r);
  double g = 0.0;
  for (int i = 1; i <= 2; ++i) {
    const MMatrix m = build_m_matrix(panel, part, h0, i);
    const Subspace& b = i == 1 ? b1 : b2;
    Eigen::MatrixXd projected = b.basis.transpose() * m.matrix * b.basis;
    projected = 0.5 * (projected + projected.transpose());
    g += spectral_norm_psd(projected);
  }
  return g;
}

ObjectiveProfile estimate_threshold(const PanelSeries& panel, const ThresholdSeries& z,
                                    const Subspace& b1, const Subspace& b2,
                                    std::pair<double, double> eta, int h0) {
  check_complement_pair(panel, b1, b2, h0);
  if (z.n() != panel.n()) throw input_error("threshold series length does not match panel");

  ObjectiveProfile profile;
  profile.grid = candidate_grid(z, eta);
  const std::size_t m = profile.grid.size();
  profile.values.resize(m);

  // Usable time points ordered by z value; flipped 2 -> 1 as r passes them.
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(panel.n()));
  for (Eigen::Index t = 0; t < panel.n(); ++t) {
    if (std::isfinite(z.z[t])) order.push_back(t);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return z.z[a] < z.z[b]; });

  GridSweep sweep(panel, z, b1, b2, h0, profile.grid[0]);
  std::size_t ptr = 0;
  while (ptr < order.size() && z.z[order[ptr]] < profile.grid[0]) ++ptr;

  for (std::size_t g = 0; g < m; ++g) {
    profile.values[g] = sweep.evaluate();
    if (g + 1 < m) {
      while (ptr < order.size() && z.z[order[ptr]] < profile.grid[g + 1]) {
        sweep.flip(order[ptr]);
        ++ptr;
      }
    }
  }

  profile.argmin_index = 0;
  for (std::size_t g = 1; g < m; ++g) {
    if (profile.values[g] < profile.values[profile.argmin_index]) profile.argmin_index = g;
  }
  return profile;
}

ThresholdFactorFit fit_threshold_factor_model(const PanelSeries& panel,
                                              const ThresholdSeries& z,
                                              const FitConfig& config) {
  if (z.n() != panel.n()) throw input_error("threshold series length does not match panel");
  if (!(config.eta_lo_quantile > 0.0 && config.eta_lo_quantile < config.eta_hi_quantile &&
        config.eta_hi_quantile < 1.0)) {
    throw input_error("eta quantiles must satisfy 0 < lo < hi < 1");
  }
  const Eigen::Index p = panel.p();

  ThresholdFactorFit fit;
  fit.h0 = config.h0;
  const std::vector<double> usable = z.usable_values();
  fit.eta = {sample_quantile(usable, config.eta_lo_quantile),
             sample_quantile(usable, config.eta_hi_quantile)};
  if (!(fit.eta.first < fit.eta.second)) {
    throw config_error("eta quantiles collapse to a single value");
  }

  const RegimePartition tails = make_partition(z, fit.eta.first, fit.eta.second);
  const int n_lo = tails.count_one();
  const int n_hi = tails.count_two();
  if (n_lo == 0 || n_hi == 0) {
    throw config_error("empty tail partition: eta quantiles leave no data below eta1 "
                       "or above eta2");
  }
  if (n_lo < config.min_tail_count || n_hi < config.min_tail_count) {
    fit.diagnostics.warnings.push_back(
        "tail partitions have only " + std::to_string(n_lo) + "/" + std::to_string(n_hi) +
        " observations; complement estimates may be unstable");
  }

  const MMatrix m1_eta = build_m_matrix(panel, tails, config.h0, 1);
  const MMatrix m2_eta = build_m_matrix(panel, tails, config.h0, 2);

  if (config.k) {
    fit.k_hat = *config.k;
    if (fit.k_hat < 1 || fit.k_hat >= p) {
      throw input_error("k must satisfy 1 <= k < p");
    }
  } else {
    const int R = config.R > 0 ? config.R
                               : std::max(1, static_cast<int>(p / 2));
    fit.k_selection = estimate_num_factors(m1_eta, m2_eta, R);
    fit.k_hat = fit.k_selection->k_hat;
  }

  fit.b1_eta = complement_space(m1_eta, fit.k_hat);
  fit.b2_eta = complement_space(m2_eta, fit.k_hat);

  fit.profile = estimate_threshold(panel, z, fit.b1_eta, fit.b2_eta, fit.eta, config.h0);
  fit.r_hat = fit.profile.r_hat();

  const RegimePartition split = make_partition(z, fit.r_hat, fit.r_hat);
  fit.q1 = estimate_loading_space(build_m_matrix(panel, split, config.h0, 1), fit.k_hat);
  fit.q2 = estimate_loading_space(build_m_matrix(panel, split, config.h0, 2), fit.k_hat);

  fit.diagnostics.space_distance = subspace_distance(fit.q1, fit.q2);
  fit.diagnostics.top_eigenvalues_1 = fit.q1.eigenvalues;
  fit.diagnostics.top_eigenvalues_2 = fit.q2.eigenvalues;
  fit.diagnostics.n_regime1 = split.count_one();
  fit.diagnostics.n_regime2 = split.count_two();
  return fit;
}

SignalRecovery recover_signal_factors(const ThresholdFactorFit& fit,
                                      const PanelSeries& panel,
                                      const ThresholdSeries& z) {
  if (fit.q1.p() != panel.p()) throw input_error("fit does not match panel dimension");
  if (z.n() != panel.n()) throw input_error("threshold series length does not match panel");
  const Eigen::Index p = panel.p(), n = panel.n();
  const int k = fit.k_hat;

  SignalRecovery out;
  out.s_hat = Eigen::MatrixXd::Zero(p, n);
  out.factors = Eigen::MatrixXd::Zero(k, n);
  out.regime_of_t.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double v = z.z[t];
    if (!std::isfinite(v)) continue;
    const Subspace& q = v < fit.r_hat ? fit.q1 : fit.q2;
    out.regime_of_t[static_cast<std::size_t>(t)] = v < fit.r_hat ? 1 : 2;
    out.factors.col(t).noalias() = q.basis.transpose() * panel.values.col(t);
    out.s_hat.col(t).noalias() = q.basis * out.factors.col(t);
  }
  return out;
}

} // namespace tfm
