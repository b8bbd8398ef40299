#pragma once

#include "tfm/panel_data.hpp"

namespace tfm {

/// Sample lagged cross-moment matrix
///   (1/(n-h)) sum_t y_t y_{t+h}' I_{t,i}(r1) I_{t+h,j}(r2).
/// The denominator is n-h regardless of how many terms survive the
/// indicators; an empty selection yields the zero matrix.
struct LaggedCrossMoment {
  Eigen::MatrixXd matrix;  // p x p
  int h = 0;
  int regime_t = 0;     // i: partition of y_t
  int regime_lead = 0;  // j: partition of y_{t+h}
  double r1 = 0.0;
  double r2 = 0.0;
  int n_terms = 0;  // time points with both indicators active
};

/// M_i(r1, r2) = sum_{h=1..h0} sum_{j=1,2} S_{i,j}(h) S_{i,j}(h)',
/// symmetrized after accumulation. Positive semi-definite by construction.
struct MMatrix {
  Eigen::MatrixXd matrix;  // p x p symmetric
  int regime = 0;
  int h0 = 0;
  double r1 = 0.0;
  double r2 = 0.0;
};

LaggedCrossMoment cross_moment(const PanelSeries& panel,
                               const RegimePartition& part, int h,
                               int regime_t, int regime_lead);

MMatrix build_m_matrix(const PanelSeries& panel, const RegimePartition& part,
                       int h0, int regime);

} // namespace tfm
