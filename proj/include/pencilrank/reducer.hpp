#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pencilrank/pencil.hpp"

namespace pencilrank {

struct ReducerConfig {
  std::uint64_t seed = 0;
  double tol = kRankTol;
};

/// One dispatch step of the recursive decomposition.
struct TraceEntry {
  std::string branch;
  Index m = 0;
  Index n = 0;
  Index terms_emitted = 0;
};

/// Staircase normal form: columns 1..s have independent slice-1 parts,
/// columns s+1..s+t have zero slice-1 parts and independent slice-2 parts,
/// columns beyond s+t are zero; within 1..s the first u columns have zero
/// slice-2 parts.  T is the transformed pencil, with T == apply_transform
/// of the input under M.
struct NormalFormResult {
  ModeTransform M;
  Pencil T;
  Index s = 0;
  Index t = 0;
  Index u = 0;
};

NormalFormResult column_normal_form(const Pencil& T, double tol = kRankTol);

/// Bookkeeping for the general m < n < 2m reduction.
struct ReductionPlan {
  Index s = 0;
  Index t = 0;
  Index u = 0;
  Index d = 0;            // min(u, n - s)
  Index ambient_dim = 0;  // dim span(a_1..a_s, b_{u+1}..b_n)
  Matrix Zbasis;          // orthonormal, ambient_dim - d columns
};

/// When span(b_1..b_s) lies inside span(b_{s+1}..b_n), a decomposition of
/// the staircase pencil with at most n terms; absent otherwise.
std::optional<Decomposition> split_disjoint(const NormalFormResult& nf,
                                            double tol = kRankTol);

/// Subspace Z with Z + V = Z + W = ambient and dim Z = ambient - dim V.
/// Bases are given as orthonormal-ish column matrices inside R^m; the result
/// is orthonormal.  Deterministic given the seed.
Matrix common_complement(const Matrix& Vbasis, const Matrix& Wbasis,
                         const Matrix& ambient_basis, std::uint64_t seed);

ReductionPlan build_reduction_plan(const NormalFormResult& nf,
                                   std::uint64_t seed, double tol = kRankTol);

/// Column operations pushing the middle columns into Z; the first and last d
/// columns become 2d rank-one terms and the middle block becomes a
/// 2 x dim(Z) x (n-2d) core in Z coordinates.
struct PeelResult {
  std::vector<RankOneTerm> peeled;  // in the frame of apply_transform(nf.T, M)
  Pencil core;
  ModeTransform M;  // from the staircase frame to the peeled frame
};

PeelResult peel_columns(const Pencil& staircase, const ReductionPlan& plan);

/// Square pencil with both slices of numerical rank n-1: normalizes slice 2
/// to diag(I_{n-1}, 0), emits the last row as one border term, and returns
/// the inner 2 x (n-1) x n pencil.
struct BorderResult {
  std::vector<RankOneTerm> border;  // in the frame of apply_transform(T, M)
  Pencil inner;                     // rows 1..n-1 of the transformed pencil
  ModeTransform M;
};

BorderResult reduce_rank_deficient(const Pencil& T, double tol = kRankTol);

/// Closed small cases: m == 1 via matrix SVD, m == 2 via a rank-one spanning
/// basis of the mode-3 slice span (3 terms for n in {2,3}, 4 otherwise).
Decomposition decompose_small(const Pencil& T, double tol = kRankTol);

struct DecomposeResult {
  Decomposition decomp;
  std::vector<TraceEntry> trace;
};

/// Full dispatch: term count <= max_rank_bound(m, n), residual <= 1e-8.
DecomposeResult decompose_traced(const Pencil& T, const ReducerConfig& cfg = {});
Decomposition decompose(const Pencil& T, const ReducerConfig& cfg = {});

}  // namespace pencilrank
