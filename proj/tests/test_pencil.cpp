#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "pencilrank/json_io.hpp"
#include "pencilrank/pencil.hpp"
#include "pencilrank/rng.hpp"

using namespace pencilrank;

namespace {

Pencil random_pencil(Index m, Index n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  return Pencil(gaussian_matrix(m, n, rng), gaussian_matrix(m, n, rng));
}

// Invertible matrix with condition number about `cond`.
Matrix conditioned_matrix(Index n, double cond, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> q1(gaussian_matrix(n, n, rng));
  Eigen::HouseholderQR<Matrix> q2(gaussian_matrix(n, n, rng));
  Vector d(n);
  for (Index i = 0; i < n; ++i)
    d(i) = std::pow(cond, -static_cast<double>(i) / std::max<Index>(n - 1, 1));
  Matrix Q1 = q1.householderQ();
  Matrix Q2 = q2.householderQ();
  return Q1 * d.asDiagonal() * Q2;
}

ModeTransform random_transform(Index m, Index n, std::uint64_t seed,
                               double cond = 100.0) {
  auto rng = make_rng(seed);
  ModeTransform M = ModeTransform::identity(m, n);
  M.S = conditioned_matrix(2, cond, rng);
  M.L = conditioned_matrix(m, cond, rng);
  M.R = conditioned_matrix(n, cond, rng);
  return M;
}

double diff(const Pencil& X, const Pencil& Y) {
  return std::sqrt((X.A - Y.A).squaredNorm() + (X.B - Y.B).squaredNorm());
}

}  // namespace

TEST_CASE("pencil_element basic combinations") {
  Matrix I2 = Matrix::Identity(2, 2);
  CHECK((pencil_element(Pencil(I2, Matrix::Zero(2, 2)), 1, 0) - I2).norm() == 0.0);
  CHECK(pencil_element(Pencil(I2, I2), 1, -1).norm() == 0.0);
  Matrix A(2, 2), B(2, 2);
  A << 1, 0, 0, 0;
  B << 0, 0, 0, 1;
  CHECK((pencil_element(Pencil(A, B), 1, 1) - I2).norm() == 0.0);
}

TEST_CASE("reconstruct: empty and single term") {
  Decomposition D;
  D.m = 2;
  D.n = 2;
  Pencil Z = reconstruct(D);
  CHECK(Z.norm() == 0.0);

  RankOneTerm t;
  t.alpha = Vector2d(1, 0);
  t.u = Vector::Unit(2, 0);
  t.v = Vector::Unit(2, 0);
  D.terms.push_back(t);
  Pencil P = reconstruct(D);
  CHECK(P.A(0, 0) == 1.0);
  CHECK(P.A.norm() == 1.0);
  CHECK(P.B.norm() == 0.0);
}

TEST_CASE("reconstruct: explicit three-term split of a 2x2x2 tensor") {
  // T with cells (slice k, row i) holding vectors over j:
  //   (a, b; b, a+b) for a=(1,0), b=(0,1).
  Vector a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  Matrix A(2, 2), B(2, 2);
  A.row(0) = a.transpose();
  A.row(1) = b.transpose();
  B.row(0) = b.transpose();
  B.row(1) = (a + b).transpose();
  Pencil T(A, B);

  // Diagonal cells (a-b) and a, plus the all-cells-b rank-one term.
  Decomposition D;
  D.m = 2;
  D.n = 2;
  RankOneTerm t1{Vector2d(1, 0), Vector::Unit(2, 0), a - b};
  RankOneTerm t2{Vector2d(0, 1), Vector::Unit(2, 1), a};
  RankOneTerm t3{Vector2d(1, 1), Vector::Ones(2), b};
  D.terms = {t1, t2, t3};
  CHECK(diff(T, reconstruct(D)) == 0.0);
  CHECK(residual(T, D) == 0.0);
}

TEST_CASE("residual trivial cases") {
  Pencil T = random_pencil(3, 4, 11);
  Decomposition D;
  D.m = 3;
  D.n = 4;
  CHECK(residual(Pencil::zero(3, 4), D) == 0.0);
  CHECK(residual(T, D) == doctest::Approx(1.0));
}

TEST_CASE("apply_transform basics") {
  Pencil T = random_pencil(3, 3, 5);
  ModeTransform id = ModeTransform::identity(3, 3);
  CHECK(diff(T, apply_transform(T, id)) == 0.0);

  ModeTransform swap_rows = ModeTransform::identity(3, 3);
  swap_rows.L = Matrix::Identity(3, 3);
  swap_rows.L.row(0).swap(swap_rows.L.row(1));
  Pencil W = apply_transform(T, swap_rows);
  CHECK((W.A.row(0) - T.A.row(1)).norm() == 0.0);
  CHECK((W.B.row(1) - T.B.row(0)).norm() == 0.0);

  ModeTransform swap_slices = ModeTransform::identity(3, 3);
  swap_slices.S << 0, 1, 1, 0;
  Pencil V = apply_transform(T, swap_slices);
  CHECK(diff(Pencil(T.B, T.A), V) == 0.0);
}

TEST_CASE("apply_transform rejects singular transforms") {
  Pencil T = random_pencil(2, 2, 3);
  ModeTransform M = ModeTransform::identity(2, 2);
  M.L = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(apply_transform(T, M), PencilError);
}

TEST_CASE("transform round trip within 1e-10 for condition <= 1e3") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Pencil T = random_pencil(4, 5, seed);
    // Per-factor condition 10 keeps the composite transform's condition
    // number at or below 1e3 (three factors compose multiplicatively).
    ModeTransform M = random_transform(4, 5, seed + 100, 10.0);
    Pencil W = apply_transform(T, M);
    ModeTransform Minv = ModeTransform::identity(4, 5);
    Minv.S = M.S.inverse();
    Minv.L = M.L.inverse();
    Minv.R = M.R.inverse();
    Pencil back = apply_transform(W, Minv);
    CHECK(diff(T, back) <= 1e-10 * T.norm());
  }
}

TEST_CASE("pull_back inverts transforms term by term") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Pencil T = random_pencil(3, 4, seed);
    ModeTransform M = random_transform(3, 4, seed + 55);
    Pencil W = apply_transform(T, M);

    // A decomposition of W: one term per matrix entry of each slice via SVD
    // is overkill; an entry-wise split is enough for the identity check.
    Decomposition D;
    D.m = 3;
    D.n = 4;
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 4; ++j) {
        RankOneTerm t;
        t.alpha = Vector2d(W.A(i, j), W.B(i, j));
        t.u = Vector::Unit(3, i);
        t.v = Vector::Unit(4, j);
        D.terms.push_back(t);
      }
    REQUIRE(residual(W, D) <= 1e-12);

    Decomposition P = pull_back(D, M);
    CHECK(P.term_count() == D.term_count());
    CHECK(residual(T, P) <= 1e-10);
    CHECK(residual(T, P) == doctest::Approx(residual(W, D)).epsilon(1e-8));
  }
}

TEST_CASE("pull_back through a transpose flag swaps modes") {
  Pencil T = random_pencil(4, 2, 7);  // m > n
  ModeTransform M = ModeTransform::identity(2, 4);
  M.transpose_first = true;
  Pencil W = apply_transform(T, M);  // 2 x 4
  CHECK(W.rows() == 2);
  CHECK(W.cols() == 4);
  Decomposition D;
  D.m = 2;
  D.n = 4;
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 4; ++j) {
      RankOneTerm t;
      t.alpha = Vector2d(W.A(i, j), W.B(i, j));
      t.u = Vector::Unit(2, i);
      t.v = Vector::Unit(4, j);
      D.terms.push_back(t);
    }
  Decomposition P = pull_back(D, M);
  CHECK(P.m == 4);
  CHECK(P.n == 2);
  CHECK(residual(T, P) <= 1e-12);
}

TEST_CASE("compose matches sequential application") {
  Pencil T = random_pencil(3, 3, 9);
  ModeTransform M1 = random_transform(3, 3, 1);
  ModeTransform M2 = random_transform(3, 3, 2);
  Pencil two_step = apply_transform(apply_transform(T, M1), M2);
  Pencil one_step = apply_transform(T, compose(M1, M2));
  CHECK(diff(two_step, one_step) <= 1e-10 * two_step.norm());
}

TEST_CASE("unfolding_ranks fixtures") {
  UnfoldingRanks z = unfolding_ranks(Pencil::zero(3, 3));
  CHECK(z.r1 == 0);
  CHECK(z.r2 == 0);
  CHECK(z.r3 == 0);

  Decomposition D;
  D.m = 3;
  D.n = 4;
  auto rng = make_rng(3);
  RankOneTerm t{Vector2d(1, 2), gaussian_vector(3, rng), gaussian_vector(4, rng)};
  D.terms.push_back(t);
  UnfoldingRanks one = unfolding_ranks(reconstruct(D));
  CHECK(one.r1 == 1);
  CHECK(one.r2 == 1);
  CHECK(one.r3 == 1);

  Matrix I4 = Matrix::Identity(4, 4);
  UnfoldingRanks same = unfolding_ranks(Pencil(I4, I4));
  CHECK(same.r1 == 1);
  CHECK(same.r2 == 4);
  CHECK(same.r3 == 4);
}

TEST_CASE("unfolding ranks bounded by term count") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = make_rng(seed + 40);
    Decomposition D;
    D.m = 4;
    D.n = 5;
    Index k = 1 + static_cast<Index>(seed % 5);
    for (Index i = 0; i < k; ++i) {
      RankOneTerm t;
      t.alpha = Vector2d(gaussian_vector(2, rng)(0), gaussian_vector(2, rng)(0));
      t.u = gaussian_vector(4, rng);
      t.v = gaussian_vector(5, rng);
      D.terms.push_back(t);
    }
    UnfoldingRanks r = unfolding_ranks(reconstruct(D));
    CHECK(r.r1 <= k);
    CHECK(r.r2 <= k);
    CHECK(r.r3 <= k);
  }
}

TEST_CASE("max_rank_bound fixtures and properties") {
  CHECK(max_rank_bound(2, 2).bound == 3);
  CHECK(max_rank_bound(5, 5).bound == 7);
  CHECK(max_rank_bound(3, 5).bound == 5);
  CHECK(max_rank_bound(2, 9).bound == 4);
  CHECK(max_rank_bound(1, 1).bound == 1);
  CHECK(max_rank_bound(1, 7).bound == 2);
  CHECK_THROWS_AS(max_rank_bound(0, 3), PencilError);

  for (Index m = 1; m <= 12; ++m)
    for (Index n = 1; n <= 12; ++n) {
      CHECK(max_rank_bound(m, n).bound == max_rank_bound(n, m).bound);
      if (m > 1) CHECK(max_rank_bound(m - 1, n).bound <= max_rank_bound(m, n).bound);
      if (n > 1) CHECK(max_rank_bound(m, n - 1).bound <= max_rank_bound(m, n).bound);
    }
}

TEST_CASE("JSON round trip is canonical and strict") {
  Pencil T = random_pencil(2, 3, 77);
  std::string s1 = pencil_to_json(T);
  std::string s2 = pencil_to_json(parse_pencil(s1));
  CHECK(s1 == s2);

  Decomposition D;
  D.m = 2;
  D.n = 3;
  auto rng = make_rng(78);
  RankOneTerm t{Vector2d(0.25, -0.0), gaussian_vector(2, rng), gaussian_vector(3, rng)};
  D.terms.push_back(t);
  std::string d1 = decomposition_to_json(D);
  CHECK(d1 == decomposition_to_json(parse_decomposition(d1)));
  CHECK(format_double(-0.0) == "0");

  CHECK_THROWS(parse_pencil("{\"m\":2,\"n\":2,\"A\":[[1,2],[3,4]]}"));
  CHECK_THROWS(parse_pencil("{\"m\":2,\"n\":2,\"A\":[[1,2]],\"B\":[[1,2],[3,4]]}"));
  CHECK_THROWS(parse_pencil("not json"));
}
