#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace sandpile::stats {

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

inline double chi_square_upper_tail(double stat, int dof) {
  if (dof <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), stat));
}

/// Pearson goodness of fit of `observed` counts against cell probabilities.
inline ChiSquare chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> probs) {
  if (observed.size() != probs.size()) throw std::invalid_argument("chi_square_gof: size mismatch");
  double total = 0;
  for (auto o : observed) total += static_cast<double>(o);
  ChiSquare r;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = total * probs[i];
    if (e <= 0) throw std::invalid_argument("chi_square_gof: zero expected count");
    const double diff = static_cast<double>(observed[i]) - e;
    r.statistic += diff * diff / e;
  }
  r.dof = static_cast<int>(observed.size()) - 1;
  r.p_value = chi_square_upper_tail(r.statistic, r.dof);
  return r;
}

/// Goodness of fit against the uniform law on all cells.
inline ChiSquare chi_square_uniform(std::span<const std::uint64_t> observed) {
  std::vector<double> p(observed.size(), 1.0 / static_cast<double>(observed.size()));
  return chi_square_gof(observed, p);
}

/// Two-sample homogeneity test on a 2 x k contingency table.  Cells empty in
/// both samples are dropped.
inline ChiSquare chi_square_homogeneity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("chi_square_homogeneity: size mismatch");
  double na = 0, nb = 0;
  for (auto x : a) na += static_cast<double>(x);
  for (auto x : b) nb += static_cast<double>(x);
  ChiSquare r;
  int cells = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double col = static_cast<double>(a[i] + b[i]);
    if (col == 0) continue;
    ++cells;
    const double ea = col * na / (na + nb), eb = col * nb / (na + nb);
    r.statistic += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
  }
  r.dof = cells - 1;
  r.p_value = chi_square_upper_tail(r.statistic, r.dof);
  return r;
}

/// Sample mean and standard error from exact integer power sums.
struct MomentSums {
  std::int64_t n = 0;
  std::int64_t sum = 0;
  // Exact so that merge order never changes the result.
  unsigned __int128 sum_sq = 0;

  void add(std::int64_t x) {
    ++n;
    sum += x;
    const auto ax = static_cast<unsigned __int128>(x < 0 ? -x : x);
    sum_sq += ax * ax;
  }

  void merge(const MomentSums& o) {
    n += o.n;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }

  double mean() const { return n ? static_cast<double>(sum) / static_cast<double>(n) : 0.0; }

  double stderr_of_mean() const {
    if (n < 2) return 0.0;
    const long double m = static_cast<long double>(sum) / n;
    const long double var = (static_cast<long double>(sum_sq) - n * m * m) / (n - 1);
    return static_cast<double>(std::sqrt(std::max<long double>(var, 0) / n));
  }
};

/// Standard error of a Bernoulli frequency.
inline double binomial_stderr(std::uint64_t hits, std::uint64_t n) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(hits) / static_cast<double>(n);
  return std::sqrt(p * (1 - p) / static_cast<double>(n));
}

}  // namespace sandpile::stats
