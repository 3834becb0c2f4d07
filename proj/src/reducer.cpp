#include "pencilrank/reducer.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "pencilrank/rng.hpp"
#include "pencilrank/symmetrize.hpp"

namespace pencilrank {

namespace {

Index rank_above(const Matrix& M, double abs_thresh) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& sv = svd.singularValues();
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > abs_thresh) ++r;
  return r;
}

Vector embed(const Vector& v, Index offset, Index len) {
  Vector out = Vector::Zero(len);
  out.segment(offset, v.size()) = v;
  return out;
}

// Rank-one terms of a single matrix slice: slice index 0 puts the weight in
// alpha(0), index 1 in alpha(1).  Singular values at machine-noise level are
// dropped.
void matrix_split_terms(const Matrix& M, int slice, Index v_offset, Index n,
                        std::vector<RankOneTerm>& out) {
  if (M.size() == 0) return;
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) <= 1e-14 * sv(0)) break;
    RankOneTerm t;
    t.alpha = slice == 0 ? Vector2d(sv(i), 0.0) : Vector2d(0.0, sv(i));
    t.u = svd.matrixU().col(i);
    t.v = embed(svd.matrixV().col(i), v_offset, n);
    out.push_back(std::move(t));
  }
}

Matrix orthonormal_columns(const Matrix& M, double abs_thresh) {
  if (M.size() == 0) return Matrix(M.rows(), 0);
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > abs_thresh) ++r;
  return svd.matrixU().leftCols(r);
}

double smallest_singular_value(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& sv = svd.singularValues();
  if (M.rows() < M.cols()) return 0.0;  // column-rank deficient by shape
  return sv(sv.size() - 1);
}

}  // namespace

NormalFormResult column_normal_form(const Pencil& T, double tol) {
  const Index m = T.rows(), n = T.cols();
  const double thresh = tol * std::max(T.norm(), kNormFloor);

  // Compress slice-1 columns.
  Eigen::JacobiSVD<Matrix> svdA(T.A, Eigen::ComputeFullV);
  Index s = 0;
  for (Index i = 0; i < svdA.singularValues().size(); ++i)
    if (svdA.singularValues()(i) > thresh) ++s;
  Matrix R = svdA.matrixV();
  Matrix B1 = T.B * R;

  // Compress the slice-2 parts of the remaining columns.
  Index t = 0;
  if (n - s > 0) {
    Matrix Btail = B1.rightCols(n - s);
    Eigen::JacobiSVD<Matrix> svdB(Btail, Eigen::ComputeFullV);
    for (Index i = 0; i < svdB.singularValues().size(); ++i)
      if (svdB.singularValues()(i) > thresh) ++t;
    Matrix R2 = Matrix::Identity(n, n);
    R2.bottomRightCorner(n - s, n - s) = svdB.matrixV();
    R = R * R2;
    B1 = T.B * R;
  }

  // Reduce the leading slice-2 parts modulo the trailing span, then reorder
  // the leading block so the zero slice-2 parts come first.
  Index u = s;
  if (s > 0) {
    Matrix R3 = Matrix::Identity(n, n);
    if (t > 0) {
      Matrix Wt = B1.middleCols(s, t);
      Matrix coeff = Wt.colPivHouseholderQr().solve(B1.leftCols(s));
      R3.block(s, 0, t, s) = -coeff;
    }
    Matrix Bred = (T.B * R * R3).leftCols(s);
    Eigen::JacobiSVD<Matrix> svdL(Bred, Eigen::ComputeFullV);
    Index k = 0;
    for (Index i = 0; i < svdL.singularValues().size(); ++i)
      if (svdL.singularValues()(i) > thresh) ++k;
    u = s - k;
    Matrix C(s, s);
    C.leftCols(u) = svdL.matrixV().rightCols(u);
    C.rightCols(k) = svdL.matrixV().leftCols(k);
    Matrix R4 = Matrix::Identity(n, n);
    R4.topLeftCorner(s, s) = C;
    R = R * R3 * R4;
  }

  NormalFormResult nf;
  nf.M = ModeTransform::identity(m, n);
  nf.M.R = R;
  nf.T = apply_transform(T, nf.M);
  nf.s = s;
  nf.t = t;
  nf.u = u;
  return nf;
}

std::optional<Decomposition> split_disjoint(const NormalFormResult& nf, double tol) {
  (void)tol;
  if (nf.u < nf.s) return std::nullopt;
  const Index n = nf.T.cols();
  Decomposition D;
  D.m = nf.T.rows();
  D.n = n;
  for (Index j = 0; j < nf.s; ++j) {
    RankOneTerm term;
    term.alpha = Vector2d(1.0, 0.0);
    term.u = nf.T.A.col(j);
    term.v = Vector::Unit(n, j);
    D.terms.push_back(std::move(term));
  }
  for (Index j = nf.s; j < nf.s + nf.t; ++j) {
    RankOneTerm term;
    term.alpha = Vector2d(0.0, 1.0);
    term.u = nf.T.B.col(j);
    term.v = Vector::Unit(n, j);
    D.terms.push_back(std::move(term));
  }
  return D;
}

Matrix common_complement(const Matrix& Vbasis, const Matrix& Wbasis,
                         const Matrix& ambient_basis, std::uint64_t seed) {
  const Index d = Vbasis.cols();
  const Index amb = ambient_basis.cols();
  if (Wbasis.cols() != d)
    throw PencilError("common_complement: subspace dimensions differ");
  const Index z = amb - d;
  if (z < 0) throw PencilError("common_complement: subspaces exceed the ambient space");
  if (z == 0) return Matrix(ambient_basis.rows(), 0);

  std::mt19937_64 rng = make_rng(seed ^ 0x5a5a5a5aull);
  Matrix best;
  double best_quality = -1.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix C = gaussian_matrix(amb, z, rng);
    Matrix Z = ambient_basis * C;
    Eigen::HouseholderQR<Matrix> qr(Z);
    Matrix Q = qr.householderQ() * Matrix::Identity(Z.rows(), z);
    Matrix ZV(Z.rows(), z + d), ZW(Z.rows(), z + d);
    ZV << Q, Vbasis;
    ZW << Q, Wbasis;
    double quality = std::min(smallest_singular_value(ZV), smallest_singular_value(ZW));
    if (quality > best_quality) {
      best_quality = quality;
      best = Q;
    }
    if (best_quality > 0.1) break;
  }
  if (best_quality < 1e-6)
    throw PencilError("common_complement: no complement passed the rank tests "
                      "(conditioning trouble)");
  return best;
}

ReductionPlan build_reduction_plan(const NormalFormResult& nf, std::uint64_t seed,
                                   double tol) {
  const Index n = nf.T.cols();
  if (nf.s + nf.t != n)
    throw PencilError("build_reduction_plan: staircase has zero columns; drop them first");
  if (nf.u >= nf.s)
    throw PencilError("build_reduction_plan: disjoint case, use split_disjoint");
  const double thresh = tol * std::max(nf.T.norm(), kNormFloor);

  ReductionPlan plan;
  plan.s = nf.s;
  plan.t = nf.t;
  plan.u = nf.u;
  plan.d = std::min(nf.u, n - nf.s);
  if (plan.d < 1)
    throw PencilError("build_reduction_plan: d must be positive (requires m < n)");

  Matrix span(nf.T.rows(), nf.s + (n - nf.u));
  span << nf.T.A.leftCols(nf.s), nf.T.B.rightCols(n - nf.u);
  Matrix ambient = orthonormal_columns(span, thresh);
  plan.ambient_dim = ambient.cols();

  Matrix V = orthonormal_columns(nf.T.A.leftCols(plan.d), thresh);
  Matrix W = orthonormal_columns(nf.T.B.rightCols(plan.d), thresh);
  if (V.cols() != plan.d || W.cols() != plan.d)
    throw PencilError("build_reduction_plan: boundary columns lost rank");
  plan.Zbasis = common_complement(V, W, ambient, seed);
  return plan;
}

PeelResult peel_columns(const Pencil& staircase, const ReductionPlan& plan) {
  const Index n = staircase.cols();
  const Index d = plan.d;
  const Index z = plan.Zbasis.cols();

  Matrix R = Matrix::Identity(n, n);
  // Push middle slice-1 parts into Z using the first d columns (zero slice-2
  // parts there keeps slice 2 untouched).
  if (d > 0 && plan.s > d) {
    Matrix basis(staircase.rows(), d + z);
    basis << staircase.A.leftCols(d), plan.Zbasis;
    Eigen::ColPivHouseholderQR<Matrix> qr(basis);
    for (Index j = d; j < plan.s; ++j) {
      Vector x = qr.solve(staircase.A.col(j));
      for (Index k = 0; k < d; ++k) R(k, j) -= x(k);
    }
  }
  // Push middle slice-2 parts into Z using the last d columns.
  if (d > 0 && n - d > plan.u) {
    Matrix basis(staircase.rows(), d + z);
    basis << staircase.B.rightCols(d), plan.Zbasis;
    Eigen::ColPivHouseholderQR<Matrix> qr(basis);
    for (Index j = plan.u; j < n - d; ++j) {
      Vector y = qr.solve(staircase.B.col(j));
      for (Index k = 0; k < d; ++k) R(n - d + k, j) -= y(k);
    }
  }

  PeelResult out;
  out.M = ModeTransform::identity(staircase.rows(), n);
  out.M.R = R;
  Pencil peeled = apply_transform(staircase, out.M);

  for (Index j = 0; j < d; ++j) {
    RankOneTerm t;
    t.alpha = Vector2d(1.0, 0.0);
    t.u = peeled.A.col(j);
    t.v = Vector::Unit(n, j);
    out.peeled.push_back(std::move(t));
  }
  for (Index j = n - d; j < n; ++j) {
    RankOneTerm t;
    t.alpha = Vector2d(0.0, 1.0);
    t.u = peeled.B.col(j);
    t.v = Vector::Unit(n, j);
    out.peeled.push_back(std::move(t));
  }

  const Index mid = n - 2 * d;
  if (z > 0 && mid > 0) {
    out.core.A = plan.Zbasis.transpose() * peeled.A.middleCols(d, mid);
    out.core.B = plan.Zbasis.transpose() * peeled.B.middleCols(d, mid);
  }
  return out;
}

BorderResult reduce_rank_deficient(const Pencil& T, double tol) {
  const Index n = T.rows();
  if (T.rows() != T.cols())
    throw PencilError("reduce_rank_deficient: pencil must be square");
  const double scale =
      std::max(std::max(T.A.norm(), T.B.norm()), kNormFloor);
  const double thresh = tol * scale;
  if (rank_above(T.A, thresh) != n - 1 || rank_above(T.B, thresh) != n - 1)
    throw PencilError("reduce_rank_deficient: both slices must have rank n-1");

  Eigen::JacobiSVD<Matrix> svd(T.B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector inv_sigma = Vector::Ones(n);
  for (Index i = 0; i < n - 1; ++i) inv_sigma(i) = 1.0 / svd.singularValues()(i);

  BorderResult out;
  out.M = ModeTransform::identity(n, n);
  out.M.L = inv_sigma.asDiagonal() * svd.matrixU().transpose();
  out.M.R = svd.matrixV();
  Pencil W = apply_transform(T, out.M);  // slice 2 ~ diag(I_{n-1}, ~0)

  // Last row of the working pencil is (numerically) a rank-one subtensor.
  Matrix row(2, n);
  row.row(0) = W.A.row(n - 1);
  row.row(1) = W.B.row(n - 1);
  Eigen::JacobiSVD<Matrix> rsvd(row, Eigen::ComputeThinU | Eigen::ComputeThinV);
  RankOneTerm border;
  border.alpha = rsvd.singularValues()(0) * rsvd.matrixU().col(0);
  border.u = Vector::Unit(n, n - 1);
  border.v = rsvd.matrixV().col(0);
  out.border.push_back(std::move(border));

  out.inner = Pencil(W.A.topRows(n - 1), W.B.topRows(n - 1));
  return out;
}

namespace {

Vector2d perp(const Vector2d& w) { return Vector2d(-w(1), w(0)); }

// Three rank-one 2x2 matrices x*y^T spanning the hyperplane {G : <G,K> = 0}.
// vec order is column-major (k fastest).
struct RankOnePair {
  Vector2d x, y;
};

Eigen::Vector4d vec_of(const Vector2d& x, const Vector2d& y) {
  Eigen::Vector4d v;
  v << x(0) * y(0), x(1) * y(0), x(0) * y(1), x(1) * y(1);
  return v;
}

std::vector<RankOnePair> rank_one_hyperplane_basis(const Eigen::Matrix2d& K) {
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(K, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double s1 = svd.singularValues()(0);
  Vector2d u1 = svd.matrixU().col(0), v1 = svd.matrixV().col(0);
  Vector2d v2 = svd.matrixV().col(1);

  std::vector<Vector2d> ys = {v1, v2, Vector2d(1, 0), Vector2d(0, 1)};
  const double isq = 1.0 / std::sqrt(2.0);
  ys.emplace_back(isq, isq);
  ys.emplace_back(isq, -isq);
  ys.push_back(Vector2d(1, 2).normalized());
  ys.push_back(Vector2d(2, 1).normalized());
  ys.push_back(Vector2d(1, 3).normalized());
  ys.push_back(Vector2d(3, -1).normalized());

  std::vector<RankOnePair> cands;
  for (const Vector2d& y : ys) {
    Vector2d w = K * y;
    if (w.norm() <= 1e-12 * s1) {
      cands.push_back({Vector2d(1, 0), y});
      cands.push_back({Vector2d(0, 1), y});
    } else {
      cands.push_back({perp(w).normalized(), y});
    }
  }
  // Extra directions for a (near-)rank-one K; u1^T u2 = 0 keeps the last one
  // exactly orthogonal to K for any K.
  cands.push_back({perp(u1), Vector2d(1, 0)});
  cands.push_back({perp(u1), Vector2d(0, 1)});
  cands.push_back({u1, perp(v1)});

  // Only keep candidates that really lie in the hyperplane.
  std::erase_if(cands, [&](const RankOnePair& c) {
    return std::abs(c.x.dot(K * c.y)) > 1e-12 * s1;
  });

  // Greedy volume maximization over the candidate pool.
  std::vector<RankOnePair> picked;
  Matrix stack(3, 4);
  for (int round = 0; round < 3; ++round) {
    double best_q = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      Matrix trial(round + 1, 4);
      if (round > 0) trial.topRows(round) = stack.topRows(round);
      trial.row(round) = vec_of(cands[i].x, cands[i].y).transpose();
      Eigen::JacobiSVD<Matrix> s(trial);
      double q = s.singularValues()(round);
      if (q > best_q) {
        best_q = q;
        best_i = i;
      }
    }
    stack.row(round) = vec_of(cands[best_i].x, cands[best_i].y).transpose();
    picked.push_back(cands[best_i]);
  }
  return picked;
}

}  // namespace

Decomposition decompose_small(const Pencil& T, double tol) {
  const Index m = T.rows(), n = T.cols();
  if (m > 2) throw PencilError("decompose_small: m must be 1 or 2");
  Decomposition D;
  D.m = m;
  D.n = n;
  if (T.norm() <= kNormFloor) return D;

  if (m == 1) {
    Matrix M2(2, n);
    M2.row(0) = T.A.row(0);
    M2.row(1) = T.B.row(0);
    Eigen::JacobiSVD<Matrix> svd(M2, Eigen::ComputeThinU | Eigen::ComputeThinV);
    for (Index i = 0; i < svd.singularValues().size(); ++i) {
      if (svd.singularValues()(i) <= 1e-14 * svd.singularValues()(0)) break;
      RankOneTerm t;
      t.alpha = svd.singularValues()(i) * svd.matrixU().col(i);
      t.u = Vector::Ones(1);
      t.v = svd.matrixV().col(i);
      D.terms.push_back(std::move(t));
    }
    return D;
  }

  // m == 2: work with the mode-3 slices M_j (2x2, M_j(k,i) = slice_k(i,j)).
  Matrix S(n, 4);
  for (Index j = 0; j < n; ++j) {
    S(j, 0) = T.A(0, j);
    S(j, 1) = T.B(0, j);
    S(j, 2) = T.A(1, j);
    S(j, 3) = T.B(1, j);
  }
  Eigen::JacobiSVD<Matrix> svd(S, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double thresh = tol * sv(0);
  Index dim = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > thresh) ++dim;

  if (dim == 0) return D;

  if (dim == 1) {
    Eigen::Matrix2d Mbar;
    Mbar << svd.matrixV()(0, 0), svd.matrixV()(2, 0), svd.matrixV()(1, 0),
        svd.matrixV()(3, 0);
    Vector coeff = sv(0) * svd.matrixU().col(0);
    Eigen::JacobiSVD<Eigen::Matrix2d> msvd(Mbar,
                                           Eigen::ComputeFullU | Eigen::ComputeFullV);
    for (Index r = 0; r < 2; ++r) {
      if (msvd.singularValues()(r) <= 1e-14 * msvd.singularValues()(0)) break;
      RankOneTerm t;
      t.alpha = msvd.singularValues()(r) * msvd.matrixU().col(r);
      t.u = msvd.matrixV().col(r);
      t.v = coeff;
      D.terms.push_back(std::move(t));
    }
    return D;
  }

  if (dim == 4) {
    // Full slice span: one term per slice row.
    for (int k = 0; k < 2; ++k) {
      const Matrix& slice = k == 0 ? T.A : T.B;
      for (Index i = 0; i < 2; ++i) {
        RankOneTerm t;
        t.alpha = k == 0 ? Vector2d(1, 0) : Vector2d(0, 1);
        t.u = Vector::Unit(2, i);
        t.v = slice.row(i).transpose();
        D.terms.push_back(std::move(t));
      }
    }
    return D;
  }

  // dim 2 or 3: the slice span sits inside a hyperplane K^perp admitting a
  // rank-one basis; three terms suffice.
  Eigen::Matrix2d K;
  if (dim == 3) {
    K << svd.matrixV()(0, 3), svd.matrixV()(2, 3), svd.matrixV()(1, 3),
        svd.matrixV()(3, 3);
  } else {
    // Two null directions: pick the combination closest to a rank-2 K, which
    // gives the best-conditioned quadric of rank-one solutions.
    Eigen::Matrix2d K2, K3;
    K2 << svd.matrixV()(0, 2), svd.matrixV()(2, 2), svd.matrixV()(1, 2),
        svd.matrixV()(3, 2);
    K3 << svd.matrixV()(0, 3), svd.matrixV()(2, 3), svd.matrixV()(1, 3),
        svd.matrixV()(3, 3);
    double best = -1.0;
    const double isq = 1.0 / std::sqrt(2.0);
    for (auto [c2, c3] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {isq, isq},
                          {isq, -isq}, {0.6, 0.8}, {0.8, -0.6}}) {
      Eigen::Matrix2d cand = c2 * K2 + c3 * K3;
      Eigen::JacobiSVD<Eigen::Matrix2d> ks(cand);
      double q = ks.singularValues()(1) / std::max(ks.singularValues()(0), kNormFloor);
      if (q > best) {
        best = q;
        K = cand;
      }
    }
  }

  auto basis = rank_one_hyperplane_basis(K);
  Matrix C(4, 3);
  for (int r = 0; r < 3; ++r) C.col(r) = vec_of(basis[r].x, basis[r].y);
  Eigen::ColPivHouseholderQR<Matrix> qr(C);
  Matrix coeffs(n, 3);
  double worst = 0.0;
  for (Index j = 0; j < n; ++j) {
    Vector rhs = S.row(j).transpose();
    Vector c = qr.solve(rhs);
    coeffs.row(j) = c.transpose();
    worst = std::max(worst, (C * c - rhs).norm());
  }
  if (worst > 1e-8 * std::max(T.norm(), kNormFloor))
    throw PencilError("decompose_small: rank-one spanning basis failed");
  for (int r = 0; r < 3; ++r) {
    RankOneTerm t;
    t.alpha = basis[r].x;
    t.u = basis[r].y;
    t.v = coeffs.col(r);
    D.terms.push_back(std::move(t));
  }
  return D;
}

namespace {

struct Ctx {
  ReducerConfig cfg;
  std::vector<TraceEntry>* trace = nullptr;
};

void push_trace(const Ctx& ctx, const char* branch, Index m, Index n,
                Index emitted) {
  if (ctx.trace) ctx.trace->push_back({branch, m, n, emitted});
}

void check_budget(Index emitted, Index core_m, Index core_n, Index m, Index n,
                  const char* branch) {
  Index core_bound =
      (core_m > 0 && core_n > 0) ? max_rank_bound(core_m, core_n).bound : 0;
  if (emitted + core_bound > max_rank_bound(m, n).bound)
    throw PencilError(std::string("term budget exceeded in branch ") + branch);
}

Decomposition decompose_rec(const Pencil& T, const Ctx& ctx, int depth,
                            std::uint64_t seed);

// Square pencil, at least one well-conditioned slice: symmetrization path.
Decomposition square_nonsingular(const Pencil& T, const Ctx& ctx,
                                 std::uint64_t seed) {
  const Index n = T.rows();
  std::mt19937_64 rng = make_rng(seed ^ 0xd1cebeefull);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  std::vector<std::pair<double, std::pair<double, double>>> cands;
  auto consider = [&](double mu, double lambda) {
    Matrix E = pencil_element(T, mu, lambda);
    Eigen::JacobiSVD<Matrix> svd(E);
    cands.push_back({svd.singularValues()(n - 1), {mu, lambda}});
  };
  consider(1.0, 0.0);
  consider(0.0, 1.0);
  for (int i = 0; i < 32; ++i) {
    double th = angle(rng);
    consider(std::cos(th), std::sin(th));
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  std::string last_error = "no candidate element";
  for (int k = 0; k < 3 && k < static_cast<int>(cands.size()); ++k) {
    try {
      auto [mu, lambda] = cands[k].second;
      Decomposition D = decompose_nonsingular(T, mu, lambda, seed + k);
      if (residual(T, D) > 1e-8)
        throw PencilError("nonsingular path residual too large");
      return D;
    } catch (const PencilError& e) {
      last_error = e.what();
    }
  }
  throw PencilError("square_nonsingular: " + last_error);
}

// Square pencil, both slices singular, one of rank <= n-2: confine the
// deficient slice to its leading block and split off the freed columns.
Decomposition square_deficient_slice(const Pencil& T, const Ctx& ctx, int depth,
                                     std::uint64_t seed, double thresh) {
  const Index n = T.rows();
  Index rA = rank_above(T.A, thresh);
  Index rB = rank_above(T.B, thresh);
  ModeTransform M = ModeTransform::identity(n, n);
  if (rA < rB) M.S << 0, 1, 1, 0;  // move the lower-rank slice to position 2
  Index r = std::min(rA, rB);

  Pencil Tsw = apply_transform(T, M);
  Eigen::JacobiSVD<Matrix> svd(Tsw.B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ModeTransform Mlr = ModeTransform::identity(n, n);
  Mlr.L = svd.matrixU().transpose();
  Mlr.R = svd.matrixV();
  M = compose(M, Mlr);
  Pencil W = apply_transform(T, M);  // slice 2 supported on top-left r x r

  Decomposition D;
  D.m = n;
  D.n = n;
  // Columns r+1..n carry only slice-1 mass: plain matrix split.
  matrix_split_terms(W.A.rightCols(n - r), 0, r, n, D.terms);
  Index emitted = D.term_count();

  if (r > 0) {
    Pencil core(W.A.leftCols(r), W.B.leftCols(r));
    check_budget(emitted, n, r, n, n, "peel_deficient_slice");
    Decomposition sub = decompose_rec(core, ctx, depth + 1, seed + 1);
    for (RankOneTerm& t : sub.terms) {
      t.v = embed(t.v, 0, n);
      D.terms.push_back(std::move(t));
    }
  }
  push_trace(ctx, "peel_deficient_slice", n, n, emitted);
  return pull_back(D, M);
}

Decomposition decompose_rec(const Pencil& T, const Ctx& ctx, int depth,
                            std::uint64_t seed) {
  const Index m = T.rows(), n = T.cols();
  if (depth > m + n + 8)
    throw PencilError("decompose: recursion depth exceeded");

  if (m > n) {
    push_trace(ctx, "canonical_transpose", m, n, 0);
    Decomposition D = decompose_rec(T.transposed(), ctx, depth + 1, seed);
    Decomposition out;
    out.m = m;
    out.n = n;
    for (RankOneTerm& t : D.terms) {
      std::swap(t.u, t.v);
      out.terms.push_back(std::move(t));
    }
    return out;
  }

  if (T.norm() <= kNormFloor) {
    push_trace(ctx, "zero", m, n, 0);
    Decomposition D;
    D.m = m;
    D.n = n;
    return D;
  }

  if (m <= 2) {
    Decomposition D = decompose_small(T, ctx.cfg.tol);
    push_trace(ctx, m == 1 ? "small_m1" : "small_m2", m, n, D.term_count());
    return D;
  }

  if (n >= 2 * m) {
    Decomposition D;
    D.m = m;
    D.n = n;
    matrix_split_terms(T.A, 0, 0, n, D.terms);
    matrix_split_terms(T.B, 1, 0, n, D.terms);
    push_trace(ctx, "slice_split_wide", m, n, D.term_count());
    return D;
  }

  if (m == n) {
    const double scale = std::max(std::max(T.A.norm(), T.B.norm()), kNormFloor);
    const double thresh = ctx.cfg.tol * scale;
    double icA = inverse_condition(T.A), icB = inverse_condition(T.B);
    // Borderline slices (within 10x of the rank threshold) take the singular
    // path, which never produces worse counts.
    bool slice_ok = std::max(icA, icB) >= 10.0 * ctx.cfg.tol;
    if (slice_ok) {
      Decomposition D = square_nonsingular(T, ctx, seed);
      push_trace(ctx, "nonsingular", m, n, D.term_count());
      return D;
    }
    Index rA = rank_above(T.A, thresh), rB = rank_above(T.B, thresh);
    if (std::min(rA, rB) <= n - 2)
      return square_deficient_slice(T, ctx, depth, seed, thresh);

    BorderResult br = reduce_rank_deficient(T, ctx.cfg.tol);
    check_budget(static_cast<Index>(br.border.size()), n - 1, n, n, n,
                 "reduce_rank_deficient");
    push_trace(ctx, "reduce_rank_deficient", m, n,
               static_cast<Index>(br.border.size()));
    Decomposition sub = decompose_rec(br.inner, ctx, depth + 1, seed + 1);
    Decomposition D;
    D.m = n;
    D.n = n;
    D.terms = br.border;
    for (RankOneTerm& t : sub.terms) {
      t.u = embed(t.u, 0, n);
      D.terms.push_back(std::move(t));
    }
    return pull_back(D, br.M);
  }

  // m < n < 2m
  NormalFormResult nf = column_normal_form(T, ctx.cfg.tol);
  const Index st = nf.s + nf.t;
  if (st < n) {
    push_trace(ctx, "drop_zero_columns", m, n, 0);
    Decomposition D;
    D.m = m;
    D.n = n;
    if (st > 0) {
      Pencil core(nf.T.A.leftCols(st), nf.T.B.leftCols(st));
      Decomposition sub = decompose_rec(core, ctx, depth + 1, seed + 1);
      for (RankOneTerm& t : sub.terms) {
        t.v = embed(t.v, 0, n);
        D.terms.push_back(std::move(t));
      }
    }
    return pull_back(D, nf.M);
  }

  if (auto flat = split_disjoint(nf, ctx.cfg.tol)) {
    push_trace(ctx, "split_disjoint", m, n, flat->term_count());
    return pull_back(*flat, nf.M);
  }

  ReductionPlan plan = build_reduction_plan(nf, seed ^ 0xfeedull, ctx.cfg.tol);
  PeelResult peel = peel_columns(nf.T, plan);
  const Index z = plan.Zbasis.cols();
  const Index mid = n - 2 * plan.d;
  check_budget(2 * plan.d, z, mid, m, n, "staircase_peel");
  push_trace(ctx, "staircase_peel", m, n, static_cast<Index>(peel.peeled.size()));

  Decomposition D;
  D.m = m;
  D.n = n;
  D.terms = peel.peeled;
  if (peel.core.A.size() > 0) {
    Decomposition sub = decompose_rec(peel.core, ctx, depth + 1, seed + 1);
    for (RankOneTerm& t : sub.terms) {
      RankOneTerm full;
      full.alpha = t.alpha;
      full.u = plan.Zbasis * t.u;
      full.v = embed(t.v, plan.d, n);
      D.terms.push_back(std::move(full));
    }
  }
  return pull_back(D, compose(nf.M, peel.M));
}

}  // namespace

DecomposeResult decompose_traced(const Pencil& T, const ReducerConfig& cfg) {
  DecomposeResult res;
  Ctx ctx{cfg, &res.trace};
  res.decomp = decompose_rec(T, ctx, 0, cfg.seed);
  return res;
}

Decomposition decompose(const Pencil& T, const ReducerConfig& cfg) {
  Ctx ctx{cfg, nullptr};
  return decompose_rec(T, ctx, 0, cfg.seed);
}

}  // namespace pencilrank
