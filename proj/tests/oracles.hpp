#pragma once

// Brute-force reference computations used only by the tests.  None of these
// share code paths with the library routines they check.

#include <cstdint>
#include <random>
#include <vector>

#include "sandpile/core.hpp"
#include "sandpile/lattice.hpp"

namespace sandpile::oracle {

/// Determinant by Laplace expansion along the first row.  Exponential; n <= 10.
inline Integer laplace_determinant(const Matrix<Integer>& m) {
  const std::size_t n = m.order();
  if (n == 0) return 1;
  if (n == 1) return m(0, 0);
  Integer det = 0;
  for (std::size_t c = 0; c < n; ++c) {
    if (m(0, c) == 0) continue;
    Matrix<Integer> minor(n - 1);
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0, jj = 0; j < n; ++j) {
        if (j == c) continue;
        minor(i - 1, jj++) = m(i, j);
      }
    const Integer term = m(0, c) * laplace_determinant(minor);
    det += (c % 2 == 0) ? term : Integer(-term);
  }
  return det;
}

/// Recurrence by exhaustive search for a forbidden subset (every non-empty
/// subset W with eta(x) <= #neighbours of x inside W for all x in W).
inline bool recurrent_by_subsets(const Volume& vol, std::span<const int> h) {
  const std::size_t n = vol.size();
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    bool forbidden = true;
    for (std::size_t x = 0; x < n && forbidden; ++x) {
      if (!(mask >> x & 1)) continue;
      int inside = 0;
      for (Site y : vol.neighbors(static_cast<Site>(x)))
        if (y >= 0 && (mask >> y & 1)) ++inside;
      if (h[x] > inside) forbidden = false;
    }
    if (forbidden) return false;
  }
  return true;
}

/// Count of recurrent configurations by the subset oracle.
inline std::uint64_t count_recurrent_by_subsets(const Volume& vol) {
  const std::size_t n = vol.size();
  std::vector<int> h(n, 1);
  std::uint64_t count = 0;
  while (true) {
    if (recurrent_by_subsets(vol, h)) ++count;
    std::size_t i = n;
    while (i-- > 0) {
      if (++h[i] <= vol.degree()) break;
      h[i] = 1;
    }
    if (i == static_cast<std::size_t>(-1)) break;
  }
  return count;
}

/// Stabilization by single legal topplings at uniformly chosen unstable sites.
struct RandomOrderResult {
  std::vector<int> heights;
  std::vector<std::int64_t> counts;
};

inline RandomOrderResult stabilize_random_order(const Volume& vol, std::vector<int> h, std::mt19937_64& rng) {
  std::vector<std::int64_t> counts(vol.size(), 0);
  std::vector<Site> unstable;
  while (true) {
    unstable.clear();
    for (Site s = 0; s < static_cast<Site>(vol.size()); ++s)
      if (h[s] > vol.degree()) unstable.push_back(s);
    if (unstable.empty()) break;
    const Site x = unstable[std::uniform_int_distribution<std::size_t>(0, unstable.size() - 1)(rng)];
    h[x] -= vol.degree();
    ++counts[x];
    for (int dir = 0; dir < vol.degree(); ++dir) {
      const Site y = vol.neighbor(x, dir);
      if (y >= 0) ++h[y];
    }
  }
  return {std::move(h), std::move(counts)};
}

/// Delta_V * v for integer vectors, from the lattice adjacency directly.
inline std::vector<std::int64_t> apply_toppling_matrix(const Volume& vol, std::span<const std::int64_t> v) {
  std::vector<std::int64_t> out(vol.size(), 0);
  for (Site x = 0; x < static_cast<Site>(vol.size()); ++x) {
    out[x] += static_cast<std::int64_t>(vol.degree()) * v[x];
    for (Site y : vol.neighbors(x))
      if (y >= 0) out[x] -= v[y];
  }
  return out;
}

}  // namespace sandpile::oracle
