#pragma once

#include <cstdint>
#include <optional>

#include "pencilrank/pencil.hpp"

namespace pencilrank {

struct AlsConfig {
  int restarts = 50;
  int max_iters = 500;
  double convergence_tol = 1e-10;  // relative residual change per sweep
  double success_tol = 1e-6;       // relative residual counting as "fit"
  std::uint64_t seed = 0;
};

/// Best rank-r CP fit found by alternating least squares over the configured
/// restarts.  `init` warm-starts the first restart.  Returns the best
/// decomposition; `best_residual` (if given) receives its relative residual.
Decomposition als_fit(const Pencil& T, Index r, const AlsConfig& cfg = {},
                      const Decomposition* init = nullptr,
                      double* best_residual = nullptr);

/// als_fit filtered by success_tol: the decomposition if some restart reached
/// a fitting residual, absent otherwise (absence is evidence, not proof).
std::optional<Decomposition> als_search(const Pencil& T, Index r,
                                        const AlsConfig& cfg = {},
                                        const Decomposition* init = nullptr,
                                        double* best_residual = nullptr);

struct RankEstimate {
  Index lower = 0;  // max unfolding rank
  Index upper = 0;  // smallest r with a successful ALS fit
};

/// Search r = lower..max_rank_bound for the smallest rank ALS can certify.
RankEstimate min_rank_estimate(const Pencil& T, const AlsConfig& cfg = {});

/// Dense i.i.d. standard Gaussian pencil.
Pencil gen_random(Index m, Index n, std::uint64_t seed);

/// (I_n; R_n) with R_n block-diagonal over 2x2 rotations (odd n gets a
/// trailing 1); known rank n + floor(n/2).  The angles cycle across blocks.
Pencil gen_rotation_pencil(Index n, const std::vector<double>& angles);
Pencil gen_rotation_pencil(Index n, double theta = 0.7);

/// Square pencil whose slices both have numerical rank `rank` (default n-1):
/// random full-rank slices with their trailing singular values removed.
Pencil gen_rank_deficient(Index n, std::uint64_t seed, Index rank = -1);

}  // namespace pencilrank
