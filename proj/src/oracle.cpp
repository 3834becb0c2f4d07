#include "pencilrank/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pencilrank/rng.hpp"

namespace pencilrank {

namespace {

// Khatri-Rao product with row index slow*rows(F) + fast: row is
// S.row(slow) .* F.row(fast).
Matrix khatri_rao(const Matrix& S, const Matrix& F) {
  const Index r = S.cols();
  Matrix K(S.rows() * F.rows(), r);
  for (Index a = 0; a < S.rows(); ++a)
    for (Index b = 0; b < F.rows(); ++b)
      K.row(a * F.rows() + b) = S.row(a).cwiseProduct(F.row(b));
  return K;
}

struct Factors {
  Matrix X;  // 2 x r
  Matrix U;  // m x r
  Matrix V;  // n x r
};

Pencil reconstruct_factors(const Factors& F, Index m, Index n) {
  Pencil T = Pencil::zero(m, n);
  for (Index r = 0; r < F.X.cols(); ++r) {
    Matrix outer = F.U.col(r) * F.V.col(r).transpose();
    T.A += F.X(0, r) * outer;
    T.B += F.X(1, r) * outer;
  }
  return T;
}

double factors_residual(const Pencil& T, const Factors& F, double tnorm) {
  Pencil R = reconstruct_factors(F, T.rows(), T.cols());
  R.A -= T.A;
  R.B -= T.B;
  return R.norm() / std::max(tnorm, kNormFloor);
}

void rebalance(Factors& F) {
  for (Index r = 0; r < F.X.cols(); ++r) {
    double nx = F.X.col(r).norm(), nu = F.U.col(r).norm(), nv = F.V.col(r).norm();
    double g = nx * nu * nv;
    if (g <= kNormFloor) {
      F.X.col(r).setZero();
      F.U.col(r).setZero();
      F.V.col(r).setZero();
      continue;
    }
    double target = std::cbrt(g);
    F.X.col(r) *= target / nx;
    F.U.col(r) *= target / nu;
    F.V.col(r) *= target / nv;
  }
}

// Mode unfoldings matching unfolding_ranks: T1(k, j*m+i), T2(i, k*n+j),
// T3(j, k*m+i).
void build_unfoldings(const Pencil& T, Matrix& T1, Matrix& T2, Matrix& T3) {
  const Index m = T.rows(), n = T.cols();
  T1.resize(2, m * n);
  for (Index j = 0; j < n; ++j) {
    T1.block(0, j * m, 1, m) = T.A.col(j).transpose();
    T1.block(1, j * m, 1, m) = T.B.col(j).transpose();
  }
  T2.resize(m, 2 * n);
  T2 << T.A, T.B;
  T3.resize(n, 2 * m);
  T3 << T.A.transpose(), T.B.transpose();
}

}  // namespace

Decomposition als_fit(const Pencil& T, Index r, const AlsConfig& cfg,
                      const Decomposition* init, double* best_residual) {
  const Index m = T.rows(), n = T.cols();
  const double tnorm = T.norm();

  Decomposition out;
  out.m = m;
  out.n = n;
  if (r == 0 || tnorm <= kNormFloor) {
    if (best_residual) *best_residual = tnorm <= kNormFloor ? 0.0 : 1.0;
    return out;
  }

  Matrix T1, T2, T3;
  build_unfoldings(T, T1, T2, T3);

  std::mt19937_64 rng = make_rng(cfg.seed ^ 0xa15ull);
  Factors best;
  double best_res = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Factors F;
    if (restart == 0 && init != nullptr) {
      F.X = Matrix::Zero(2, r);
      F.U = 1e-3 * gaussian_matrix(m, r, rng);
      F.V = 1e-3 * gaussian_matrix(n, r, rng);
      Index k = std::min<Index>(r, init->term_count());
      for (Index i = 0; i < k; ++i) {
        F.X.col(i) = init->terms[i].alpha;
        F.U.col(i) = init->terms[i].u;
        F.V.col(i) = init->terms[i].v;
      }
    } else {
      F.X = gaussian_matrix(2, r, rng);
      F.U = gaussian_matrix(m, r, rng);
      F.V = gaussian_matrix(n, r, rng);
    }

    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iters; ++it) {
      // X: T1 = X * KR(V, U)^T
      Matrix K1 = khatri_rao(F.V, F.U);
      F.X = K1.colPivHouseholderQr().solve(T1.transpose()).transpose();
      // U: T2 = U * KR(X, V)^T
      Matrix K2 = khatri_rao(F.X, F.V);
      F.U = K2.colPivHouseholderQr().solve(T2.transpose()).transpose();
      // V: T3 = V * KR(X, U)^T
      Matrix K3 = khatri_rao(F.X, F.U);
      F.V = K3.colPivHouseholderQr().solve(T3.transpose()).transpose();
      rebalance(F);

      double res = factors_residual(T, F, tnorm);
      // Each mode update is an exact least-squares minimizer, so the residual
      // cannot grow beyond rounding noise.
      if (res > prev + 1e-10 * (1.0 + prev))
        throw PencilError("als_fit: residual increased within a sweep");
      if (std::abs(prev - res) < cfg.convergence_tol || res < 1e-14) {
        prev = res;
        break;
      }
      prev = res;
    }

    double res = factors_residual(T, F, tnorm);
    if (res < best_res) {
      best_res = res;
      best = F;
    }
    if (best_res < 1e-12) break;
  }

  for (Index i = 0; i < r; ++i) {
    RankOneTerm t;
    t.alpha = best.X.col(i);
    t.u = best.U.col(i);
    t.v = best.V.col(i);
    out.terms.push_back(std::move(t));
  }
  if (best_residual) *best_residual = best_res;
  return out;
}

std::optional<Decomposition> als_search(const Pencil& T, Index r,
                                        const AlsConfig& cfg,
                                        const Decomposition* init,
                                        double* best_residual) {
  double res = 0.0;
  Decomposition D = als_fit(T, r, cfg, init, &res);
  if (best_residual) *best_residual = res;
  if (res <= cfg.success_tol) return D;
  return std::nullopt;
}

RankEstimate min_rank_estimate(const Pencil& T, const AlsConfig& cfg) {
  RankEstimate est;
  UnfoldingRanks ur = unfolding_ranks(T);
  est.lower = std::max({ur.r1, ur.r2, ur.r3});
  const Index bound = max_rank_bound(T.rows(), T.cols()).bound;
  est.upper = bound;
  for (Index r = est.lower; r <= bound; ++r) {
    double res = 0.0;
    als_fit(T, r, cfg, nullptr, &res);
    if (res <= cfg.success_tol) {
      est.upper = r;
      break;
    }
  }
  return est;
}

Pencil gen_random(Index m, Index n, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed);
  Matrix A = gaussian_matrix(m, n, rng);
  Matrix B = gaussian_matrix(m, n, rng);
  return Pencil(std::move(A), std::move(B));
}

Pencil gen_rotation_pencil(Index n, const std::vector<double>& angles) {
  if (angles.empty()) throw PencilError("gen_rotation_pencil: no angles given");
  Matrix A = Matrix::Identity(n, n);
  Matrix B = Matrix::Zero(n, n);
  Index i = 0;
  for (std::size_t block = 0; i + 1 < n; i += 2, ++block) {
    double th = angles[block % angles.size()];
    B(i, i) = std::cos(th);
    B(i, i + 1) = -std::sin(th);
    B(i + 1, i) = std::sin(th);
    B(i + 1, i + 1) = std::cos(th);
  }
  if (i < n) B(i, i) = 1.0;
  return Pencil(std::move(A), std::move(B));
}

Pencil gen_rotation_pencil(Index n, double theta) {
  return gen_rotation_pencil(n, std::vector<double>{theta});
}

Pencil gen_rank_deficient(Index n, std::uint64_t seed, Index rank) {
  if (rank < 0) rank = n - 1;
  if (rank > n) throw PencilError("gen_rank_deficient: rank exceeds n");
  std::mt19937_64 rng = make_rng(seed ^ 0xdefull);
  auto truncate = [&](const Matrix& M) {
    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vector sv = svd.singularValues();
    for (Index i = rank; i < n; ++i) sv(i) = 0.0;
    return Matrix(svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose());
  };
  Matrix A = truncate(gaussian_matrix(n, n, rng));
  Matrix B = truncate(gaussian_matrix(n, n, rng));
  return Pencil(std::move(A), std::move(B));
}

}  // namespace pencilrank
