#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pencilrank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Eigen::Index;
using Eigen::Matrix2d;
using Eigen::Vector2d;

/// Relative tolerance for all numerical rank decisions (against the largest
/// singular value).
inline constexpr double kRankTol = 1e-9;

/// Floor guarding relative residuals of (near-)zero tensors.
inline constexpr double kNormFloor = 1e-300;

/// Invertibility threshold for mode transforms: sigma_min/sigma_max below
/// this is treated as singular.
inline constexpr double kSingularTol = 1e-12;

class PencilError : public std::runtime_error {
 public:
  explicit PencilError(const std::string& what) : std::runtime_error(what) {}
};

/// A 2 x m x n tensor stored as its two m x n slices.
struct Pencil {
  Matrix A;
  Matrix B;

  Pencil() = default;
  Pencil(Matrix a, Matrix b);

  Index rows() const { return A.rows(); }
  Index cols() const { return A.cols(); }

  /// Frobenius norm of the full tensor (both slices stacked).
  double norm() const;

  Pencil transposed() const { return Pencil(A.transpose(), B.transpose()); }

  static Pencil zero(Index m, Index n) {
    return Pencil(Matrix::Zero(m, n), Matrix::Zero(m, n));
  }
};

/// One CP term: slice k of the denoted tensor is alpha[k] * u * v^T.
struct RankOneTerm {
  Vector2d alpha;
  Vector u;
  Vector v;
};

struct Decomposition {
  Index m = 0;
  Index n = 0;
  std::vector<RankOneTerm> terms;

  Index term_count() const { return static_cast<Index>(terms.size()); }
};

/// Invertible change of basis on the three modes.  The action on a pencil is
///   (A', B') = S-mix of (L*A*R, L*B*R),
/// i.e. A' = S(0,0)*LAR + S(0,1)*LBR and B' = S(1,0)*LAR + S(1,1)*LBR.
/// When `transpose_first` is set the slices are transposed before the above
/// (used to canonicalize m <= n).
struct ModeTransform {
  Matrix2d S = Matrix2d::Identity();
  Matrix L;
  Matrix R;
  bool transpose_first = false;

  static ModeTransform identity(Index m, Index n);
};

/// Closed-form maximal-rank bound for the shape (see max_rank_bound).
struct RankBound {
  Index m = 0;
  Index n = 0;
  Index bound = 0;
};

/// mu*A + lambda*B.
Matrix pencil_element(const Pencil& T, double mu, double lambda);

/// Sum of the terms; an empty list yields the zero pencil.
Pencil reconstruct(const Decomposition& D);

/// ||T - reconstruct(D)||_F / max(||T||_F, kNormFloor).
double residual(const Pencil& T, const Decomposition& D);

Pencil apply_transform(const Pencil& T, const ModeTransform& M);

/// If D decomposes apply_transform(T, M), pull_back(D, M) decomposes T with
/// the same number of terms.
Decomposition pull_back(const Decomposition& D, const ModeTransform& M);

/// Compose two transforms: apply(apply(T, first), second) == apply(T, result).
/// `second` must not carry a transpose flag.
ModeTransform compose(const ModeTransform& first, const ModeTransform& second);

struct UnfoldingRanks {
  Index r1 = 0;  // 2 x (m n)
  Index r2 = 0;  // m x (2 n)
  Index r3 = 0;  // n x (2 m)
};

/// Numerical ranks of the three unfoldings; each is a CP rank lower bound.
UnfoldingRanks unfolding_ranks(const Pencil& T, double tol = kRankTol);

/// r(2,m,n): m + floor(n/2) for m <= n <= 2m, 2m for n >= 2m (after
/// canonicalizing m <= n).
RankBound max_rank_bound(Index m, Index n);

/// Count of singular values above tol * sigma_max.
Index numerical_rank(const Matrix& M, double tol = kRankTol);

/// sigma_min / sigma_max, or 0 for an empty/zero matrix.
double inverse_condition(const Matrix& M);

}  // namespace pencilrank
