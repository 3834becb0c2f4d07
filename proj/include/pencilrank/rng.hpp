#pragma once

#include <cstdint>
#include <random>

#include "pencilrank/pencil.hpp"

namespace pencilrank {

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  // splitmix-style scramble so nearby seeds give unrelated streams
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return std::mt19937_64(z ^ (z >> 31));
}

inline Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = dist(rng);
  return M;
}

inline Vector gaussian_vector(Index size, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace pencilrank
