#include "tfm/subspace.hpp"

#include <cmath>

#include "tfm/errors.hpp"

namespace tfm {

namespace {

constexpr double kSignTieTol = 1e-12;
constexpr double kRatioFloorScale = 1e-12;

// 1'q > 0; when the column sum is numerically zero, make the first
// largest-magnitude entry positive instead.
void fix_column_sign(Eigen::Ref<Eigen::VectorXd> q) {
  const double colsum = q.sum();
  if (colsum > kSignTieTol) return;
  if (colsum < -kSignTieTol) {
    q = -q;
    return;
  }
  Eigen::Index imax = 0;
  double best = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (std::abs(q[i]) > best) {
      best = std::abs(q[i]);
      imax = i;
    }
  }
  if (q[imax] < 0.0) q = -q;
}

// Full symmetric eigendecomposition with eigenvalues sorted non-increasing
// and sign-fixed vectors.
EigenPairs full_eigen(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw numeric_error("symmetric eigendecomposition did not converge");
  }
  const Eigen::Index p = m.rows();
  EigenPairs out;
  out.values.resize(p);
  out.vectors.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    out.values[i] = solver.eigenvalues()[p - 1 - i];
    out.vectors.col(i) = solver.eigenvectors().col(p - 1 - i);
    fix_column_sign(out.vectors.col(i));
  }
  return out;
}

void check_symmetric(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw input_error("matrix is not square");
  const double scale = std::max(1.0, m.norm());
  if ((m - m.transpose()).norm() > 1e-10 * scale) {
    throw input_error("matrix is not symmetric within tolerance");
  }
}

std::vector<double> ratio_profile(const Eigen::VectorXd& lambda, int R) {
  const double floor = kRatioFloorScale * lambda[0];
  std::vector<double> ratios(static_cast<std::size_t>(R));
  for (int k = 1; k <= R; ++k) {
    ratios[static_cast<std::size_t>(k - 1)] =
        lambda[k] / std::max(lambda[k - 1], floor);
  }
  return ratios;
}

int argmin_ratio(const std::vector<double>& ratios) {
  int best = 1;
  for (int k = 2; k <= static_cast<int>(ratios.size()); ++k) {
    if (ratios[static_cast<std::size_t>(k - 1)] < ratios[static_cast<std::size_t>(best - 1)]) {
      best = k;
    }
  }
  return best;
}

} // namespace

EigenPairs top_eigenpairs(const Eigen::MatrixXd& m, int k) {
  check_symmetric(m);
  if (k < 1 || k > m.rows()) {
    throw input_error("k must satisfy 1 <= k <= p, got k = " + std::to_string(k));
  }
  EigenPairs full = full_eigen(m);
  EigenPairs out;
  out.values = full.values.head(k);
  out.vectors = full.vectors.leftCols(k);
  return out;
}

Subspace estimate_loading_space(const MMatrix& m, int k) {
  EigenPairs pairs = top_eigenpairs(m.matrix, k);
  if (pairs.values[0] <= 0.0) {
    throw numeric_error("zero operator has no identifiable leading space");
  }
  Subspace out;
  out.basis = std::move(pairs.vectors);
  out.eigenvalues = pairs.values.cwiseMax(0.0);
  out.source = {SubspaceRole::loading, m.regime, m.r1, m.r2};
  return out;
}

Subspace complement_space(const MMatrix& m, int k) {
  const Eigen::Index p = m.matrix.rows();
  if (k < 1 || k >= p) {
    throw input_error("complement needs 1 <= k < p, got k = " + std::to_string(k));
  }
  check_symmetric(m.matrix);
  EigenPairs full = full_eigen(m.matrix);
  Subspace out;
  out.basis = full.vectors.rightCols(p - k);
  out.eigenvalues = full.values.tail(p - k).cwiseMax(0.0);
  out.source = {SubspaceRole::complement, m.regime, m.r1, m.r2};
  return out;
}

Subspace span_of(const Eigen::MatrixXd& columns) {
  if (columns.cols() < 1 || columns.rows() < columns.cols()) {
    throw input_error("span_of needs a tall p x k matrix with k >= 1");
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(columns);
  const Eigen::MatrixXd r = qr.matrixQR()
                                .topLeftCorner(columns.cols(), columns.cols())
                                .triangularView<Eigen::Upper>();
  const double scale = std::max(1.0, columns.norm());
  for (Eigen::Index i = 0; i < columns.cols(); ++i) {
    if (std::abs(r(i, i)) < 1e-12 * scale) {
      throw numeric_error("columns are numerically rank deficient");
    }
  }
  Subspace out;
  out.basis = qr.householderQ() * Eigen::MatrixXd::Identity(columns.rows(), columns.cols());
  for (Eigen::Index c = 0; c < out.basis.cols(); ++c) fix_column_sign(out.basis.col(c));
  out.source = {SubspaceRole::external, 0,
                std::numeric_limits<double>::quiet_NaN(),
                std::numeric_limits<double>::quiet_NaN()};
  return out;
}

double subspace_distance(const Subspace& s1, const Subspace& s2) {
  if (s1.p() != s2.p()) throw input_error("subspace row dimensions differ");
  if (s1.dim() < 1 || s2.dim() < 1) throw input_error("subspaces must have >= 1 column");
  // 1 - tr(O1 O1' O2 O2') / qmin equals the projection residual
  // ||small - big (big' small)||_F^2 / qmin, which does not lose precision
  // when the spaces (nearly) coincide.
  const bool first_smaller = s1.dim() <= s2.dim();
  const Eigen::MatrixXd& small = first_smaller ? s1.basis : s2.basis;
  const Eigen::MatrixXd& big = first_smaller ? s2.basis : s1.basis;
  const Eigen::MatrixXd resid = small - big * (big.transpose() * small);
  const double qmin = static_cast<double>(std::min(s1.dim(), s2.dim()));
  const double inside = std::clamp(resid.squaredNorm() / qmin, 0.0, 1.0);
  return std::sqrt(inside);
}

FactorCountEstimate estimate_num_factors(const MMatrix& m1, const MMatrix& m2, int R) {
  if (m1.matrix.rows() != m2.matrix.rows()) {
    throw input_error("M matrices have different dimensions");
  }
  const Eigen::Index p = m1.matrix.rows();
  if (R < 1) throw input_error("R must be >= 1");
  if (R + 1 > p) throw input_error("R + 1 eigenvalues required, but R + 1 > p");

  FactorCountEstimate out;
  double top[2] = {0.0, 0.0};
  for (int i = 0; i < 2; ++i) {
    const Eigen::MatrixXd& m = (i == 0 ? m1 : m2).matrix;
    EigenPairs pairs = top_eigenpairs(m, R + 1);
    const Eigen::VectorXd lambda = pairs.values.cwiseMax(0.0);
    if (lambda[0] <= 0.0) {
      throw numeric_error("zero operator: eigenvalue ratios undefined");
    }
    out.ratio_profiles[static_cast<std::size_t>(i)] = ratio_profile(lambda, R);
    out.per_regime[static_cast<std::size_t>(i)] =
        argmin_ratio(out.ratio_profiles[static_cast<std::size_t>(i)]);
    top[i] = lambda[0];
  }
  out.chosen_regime = top[1] > top[0] ? 2 : 1;  // tie goes to regime 1
  out.k_hat = out.per_regime[static_cast<std::size_t>(out.chosen_regime - 1)];
  return out;
}

} // namespace tfm
