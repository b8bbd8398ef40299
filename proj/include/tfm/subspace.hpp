#pragma once

#include <array>
#include <limits>
#include <vector>

#include "tfm/moments.hpp"

namespace tfm {

enum class SubspaceRole { loading, complement, external };

struct SubspaceSource {
  SubspaceRole role = SubspaceRole::external;
  int regime = 0;
  double r1 = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
};

/// Orthonormal basis of a column space. Columns follow a deterministic sign
/// convention: 1'q > 0, falling back to a positive largest-magnitude entry
/// when the column sums to (numerical) zero.
struct Subspace {
  Eigen::MatrixXd basis;        // p x k, orthonormal columns
  Eigen::VectorXd eigenvalues;  // k, non-increasing (empty for external spans)
  SubspaceSource source;

  Eigen::Index p() const { return basis.rows(); }
  Eigen::Index dim() const { return basis.cols(); }
};

struct EigenPairs {
  Eigen::VectorXd values;   // k, non-increasing
  Eigen::MatrixXd vectors;  // p x k, orthonormal, sign-fixed
};

/// Top-k eigenpairs of a symmetric matrix, ordered by decreasing eigenvalue.
/// The full symmetric eigendecomposition is computed and sliced; inputs are
/// desk-scale so robustness wins over iterative methods.
EigenPairs top_eigenpairs(const Eigen::MatrixXd& m, int k);

/// Loading-space estimate: span of the top-k eigenvectors of M.
Subspace estimate_loading_space(const MMatrix& m, int k);

/// Orthogonal complement estimate: span of eigenvectors k+1..p of M.
Subspace complement_space(const MMatrix& m, int k);

/// Orthonormalizes arbitrary full-column-rank columns into a Subspace
/// (role `external`); used to compare against known loading matrices.
Subspace span_of(const Eigen::MatrixXd& columns);

/// D(S1, S2) = sqrt(1 - tr(O1 O1' O2 O2') / min(q1, q2)), in [0, 1].
/// 0 when one space contains the other, 1 when they are orthogonal.
double subspace_distance(const Subspace& s1, const Subspace& s2);

struct FactorCountEstimate {
  int k_hat = 0;
  std::array<int, 2> per_regime{0, 0};
  int chosen_regime = 1;  // regime with the larger top eigenvalue
  // ratio_profiles[i][k-1] = lambda_{k+1}/lambda_k of regime i+1, k = 1..R
  std::array<std::vector<double>, 2> ratio_profiles;
};

/// Eigenvalue-ratio estimate of the number of factors from the two regimes'
/// M matrices; k_hat is taken from the regime with the larger spectral norm.
/// Denominators are floored at 1e-12 * lambda_1 so exactly-rank-deficient
/// inputs select the drop position instead of dividing by zero.
FactorCountEstimate estimate_num_factors(const MMatrix& m1, const MMatrix& m2,
                                         int R);

} // namespace tfm
