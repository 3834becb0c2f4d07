#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pencilrank/pencil.hpp"

namespace pencilrank {

/// Two symmetric n x n matrices produced by the symmetrization step,
/// together with the transform relating them to the input pencil.
struct SymmetricPair {
  Matrix P;
  Matrix Q;
  ModeTransform provenance;
};

struct Correction {
  Index index;    // diagonal position (0-based, in the sorted eigenvalue frame)
  double amount;  // positive value added to make the entry +|d_i|
};

struct PositiveCorrection {
  int global_sign = 1;
  std::vector<Correction> corrections;  // at most floor(n/2) entries
};

/// Outcome of the congruence chain: W^T * Q_corrected * W = I and
/// W^T * P * W = diag(d1); `corrections` are the rank-one repair terms.
struct CongruenceResult {
  Matrix W;
  Vector d1;
  std::vector<RankOneTerm> corrections;
};

struct BoschOptions {
  int samples = 64;          // random coefficient combinations to try
  std::uint64_t seed = 0;
  double cond_limit = 1e10;  // reject X with cond above this
};

/// Symmetric invertible X with X F^T = F X, the best-conditioned of the
/// seeded samples drawn from the nullspace of the symmetry equation.
Matrix solve_symmetry_equation(const Matrix& F, int samples, std::uint64_t seed);

/// F = Asym * Bsym^{-1} with both factors symmetric (Bsym invertible).
std::pair<Matrix, Matrix> bosch_factor(const Matrix& F,
                                       const BoschOptions& opts = {});

/// U orthogonal, d sorted descending, U^T Q U = diag(d).
std::pair<Matrix, Vector> orthogonal_diag(const Matrix& Q);

/// Sign flip plus at most floor(n/2) diagonal additions making every entry
/// of the (flipped) diagonal positive.  Amount is 2|d_i| per repaired entry.
PositiveCorrection positive_correction(const Vector& d);

/// W with W^T * Qpd * W = I and W^T * P * W = diag(d1); Qpd must be
/// positive definite.
std::pair<Matrix, Vector> simultaneous_congruence_diag(const Matrix& P,
                                                       const Matrix& Qpd);

/// Diagnostics from a decompose_nonsingular run.
struct NonsingularReport {
  double element_inv_cond = 0;   // sigma_min/sigma_max of the chosen element
  double bosch_cond = 0;         // condition number of the Bosch factor X
  double sym_residual_P = 0;     // relative asymmetry of the two factors
  double sym_residual_Q = 0;
  double factor_residual = 0;    // relative error of F - P Q^{-1}
  Index correction_count = 0;
};

/// Symmetrization path for a square pencil with mu*A + lambda*B nonsingular:
/// at most n + floor(n/2) terms.
Decomposition decompose_nonsingular(const Pencil& T, double mu, double lambda,
                                    std::uint64_t seed = 0,
                                    NonsingularReport* report = nullptr);

}  // namespace pencilrank
