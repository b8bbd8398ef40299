#include "tfm/moments.hpp"

#include "tfm/errors.hpp"

namespace tfm {

namespace {

void check_regime(int regime) {
  if (regime != 1 && regime != 2) {
    throw input_error("regime index must be 1 or 2, got " + std::to_string(regime));
  }
}

const std::vector<bool>& indicator(const RegimePartition& part, int regime) {
  return regime == 1 ? part.in_one : part.in_two;
}

} // namespace

LaggedCrossMoment cross_moment(const PanelSeries& panel, const RegimePartition& part,
                               int h, int regime_t, int regime_lead) {
  check_regime(regime_t);
  check_regime(regime_lead);
  const Eigen::Index p = panel.p(), n = panel.n();
  if (h < 1 || h >= n) throw input_error("lead h must satisfy 1 <= h < n");
  if (part.n() != n) throw input_error("partition length does not match panel");

  const auto& ind_t = indicator(part, regime_t);
  const auto& ind_lead = indicator(part, regime_lead);

  std::vector<Eigen::Index> sel;
  sel.reserve(static_cast<std::size_t>(n - h));
  for (Eigen::Index t = 0; t + h < n; ++t) {
    if (ind_t[static_cast<std::size_t>(t)] && ind_lead[static_cast<std::size_t>(t + h)]) {
      sel.push_back(t);
    }
  }

  LaggedCrossMoment out;
  out.h = h;
  out.regime_t = regime_t;
  out.regime_lead = regime_lead;
  out.r1 = part.r1;
  out.r2 = part.r2;
  out.n_terms = static_cast<int>(sel.size());
  if (sel.empty()) {
    out.matrix = Eigen::MatrixXd::Zero(p, p);
    return out;
  }

  Eigen::MatrixXd left(p, static_cast<Eigen::Index>(sel.size()));
  Eigen::MatrixXd right(p, static_cast<Eigen::Index>(sel.size()));
  for (std::size_t m = 0; m < sel.size(); ++m) {
    left.col(static_cast<Eigen::Index>(m)) = panel.values.col(sel[m]);
    right.col(static_cast<Eigen::Index>(m)) = panel.values.col(sel[m] + h);
  }
  out.matrix.noalias() = left * right.transpose();
  out.matrix /= static_cast<double>(n - h);
  return out;
}

MMatrix build_m_matrix(const PanelSeries& panel, const RegimePartition& part,
                       int h0, int regime) {
  check_regime(regime);
  const Eigen::Index n = panel.n();
  if (h0 < 1 || h0 >= n) throw input_error("h0 must satisfy 1 <= h0 < n");

  const Eigen::Index p = panel.p();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, p);
  for (int h = 1; h <= h0; ++h) {
    for (int j = 1; j <= 2; ++j) {
      const LaggedCrossMoment s = cross_moment(panel, part, h, regime, j);
      acc.noalias() += s.matrix * s.matrix.transpose();
    }
  }
  // Each summand is a Gram matrix; the average with the transpose only
  // absorbs floating-point asymmetry so symmetric eigen-solvers stay exact.
  MMatrix out;
  out.matrix = 0.5 * (acc + acc.transpose());
  out.regime = regime;
  out.h0 = h0;
  out.r1 = part.r1;
  out.r2 = part.r2;
  return out;
}

} // namespace tfm
