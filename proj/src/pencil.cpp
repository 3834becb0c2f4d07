#include "pencilrank/pencil.hpp"

#include <cmath>

namespace pencilrank {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw PencilError(msg);
}

bool all_finite(const Matrix& M) { return M.allFinite(); }

}  // namespace

Pencil::Pencil(Matrix a, Matrix b) : A(std::move(a)), B(std::move(b)) {
  require(A.rows() == B.rows() && A.cols() == B.cols(),
          "pencil slices must have identical dimensions");
  require(A.rows() >= 1 && A.cols() >= 1, "pencil dimensions must be positive");
  require(all_finite(A) && all_finite(B), "pencil entries must be finite");
}

double Pencil::norm() const {
  return std::sqrt(A.squaredNorm() + B.squaredNorm());
}

ModeTransform ModeTransform::identity(Index m, Index n) {
  ModeTransform M;
  M.L = Matrix::Identity(m, m);
  M.R = Matrix::Identity(n, n);
  return M;
}

Matrix pencil_element(const Pencil& T, double mu, double lambda) {
  return mu * T.A + lambda * T.B;
}

Pencil reconstruct(const Decomposition& D) {
  Matrix A = Matrix::Zero(D.m, D.n);
  Matrix B = Matrix::Zero(D.m, D.n);
  for (const RankOneTerm& t : D.terms) {
    if (t.u.size() != D.m || t.v.size() != D.n)
      throw PencilError("decomposition term has mismatched shape");
    A.noalias() += t.alpha(0) * t.u * t.v.transpose();
    B.noalias() += t.alpha(1) * t.u * t.v.transpose();
  }
  return Pencil(A, B);
}

double residual(const Pencil& T, const Decomposition& D) {
  if (T.rows() != D.m || T.cols() != D.n)
    throw PencilError("residual: shape mismatch between tensor and decomposition");
  Pencil R = reconstruct(D);
  double err = std::sqrt((T.A - R.A).squaredNorm() + (T.B - R.B).squaredNorm());
  return err / std::max(T.norm(), kNormFloor);
}

namespace {

void check_invertible(const Matrix& M, const char* name) {
  if (inverse_condition(M) <= kSingularTol)
    throw PencilError(std::string("mode transform matrix ") + name +
                      " is numerically singular");
}

}  // namespace

Pencil apply_transform(const Pencil& T, const ModeTransform& M) {
  Pencil W = M.transpose_first ? T.transposed() : T;
  if (M.L.rows() != W.rows() || M.R.rows() != W.cols())
    throw PencilError("apply_transform: dimension mismatch");
  check_invertible(M.S, "S");
  check_invertible(M.L, "L");
  check_invertible(M.R, "R");
  Matrix LA = M.L * W.A * M.R;
  Matrix LB = M.L * W.B * M.R;
  return Pencil(M.S(0, 0) * LA + M.S(0, 1) * LB,
                M.S(1, 0) * LA + M.S(1, 1) * LB);
}

Decomposition pull_back(const Decomposition& D, const ModeTransform& M) {
  check_invertible(M.S, "S");
  check_invertible(M.L, "L");
  check_invertible(M.R, "R");
  Matrix2d Sinv = M.S.inverse();
  // Solve with L and R^T rather than forming explicit inverses.
  Eigen::PartialPivLU<Matrix> luL(M.L);
  Eigen::PartialPivLU<Matrix> luRt(Matrix(M.R.transpose()));
  Decomposition out;
  out.terms.reserve(D.terms.size());
  for (const RankOneTerm& t : D.terms) {
    RankOneTerm s;
    s.alpha = Sinv * t.alpha;
    s.u = luL.solve(t.u);
    s.v = luRt.solve(t.v);
    if (M.transpose_first) std::swap(s.u, s.v);
    out.terms.push_back(std::move(s));
  }
  if (M.transpose_first) {
    out.m = D.n;
    out.n = D.m;
  } else {
    out.m = D.m;
    out.n = D.n;
  }
  return out;
}

ModeTransform compose(const ModeTransform& first, const ModeTransform& second) {
  if (second.transpose_first)
    throw PencilError("compose: second transform may not transpose");
  ModeTransform M;
  M.S = second.S * first.S;
  M.L = second.L * first.L;
  M.R = first.R * second.R;
  M.transpose_first = first.transpose_first;
  return M;
}

UnfoldingRanks unfolding_ranks(const Pencil& T, double tol) {
  if (tol <= 0) throw PencilError("unfolding_ranks: tol must be positive");
  Index m = T.rows(), n = T.cols();
  Matrix U1(2, m * n);
  for (Index j = 0; j < n; ++j) {
    U1.block(0, j * m, 1, m) = T.A.col(j).transpose();
    U1.block(1, j * m, 1, m) = T.B.col(j).transpose();
  }
  Matrix U2(m, 2 * n);
  U2 << T.A, T.B;
  Matrix U3(n, 2 * m);
  U3 << T.A.transpose(), T.B.transpose();
  UnfoldingRanks r;
  r.r1 = numerical_rank(U1, tol);
  r.r2 = numerical_rank(U2, tol);
  r.r3 = numerical_rank(U3, tol);
  return r;
}

RankBound max_rank_bound(Index m, Index n) {
  if (m < 1 || n < 1) throw PencilError("max_rank_bound: dimensions must be positive");
  RankBound rb;
  rb.m = m;
  rb.n = n;
  Index lo = std::min(m, n), hi = std::max(m, n);
  rb.bound = (hi >= 2 * lo) ? 2 * lo : lo + hi / 2;
  return rb;
}

Index numerical_rank(const Matrix& M, double tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * sv(0)) ++r;
  return r;
}

double inverse_condition(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0.0;
  return sv(sv.size() - 1) / sv(0);
}

}  // namespace pencilrank
