#pragma once

// Finite boxes of Z^d with wired boundary, the toppling matrix and the exact
// and floating-point linear algebra built on it.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

namespace sandpile {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

using Point = std::vector<int>;
using Site = std::int32_t;

/// Edge targets that are not sites of the volume.
inline constexpr Site kSink = -1;
inline constexpr Site kOrigin = -2;  ///< the deleted site, when the volume has one

/// Direction k moves along axis k / 2, towards lower coordinates for even k.
/// This fixes the canonical "lexicographic" edge order used by the tree bijection.
constexpr int direction_axis(int dir) { return dir / 2; }
constexpr int direction_sign(int dir) { return dir % 2 == 0 ? -1 : 1; }

class Volume;
using VolumePtr = std::shared_ptr<const Volume>;

/// A box [lo, hi] in Z^d, optionally with one site removed.
///
/// Every site keeps 2d directed edge slots.  A slot points to another site,
/// to the sink (lattice neighbour outside the box) or to the deleted site.
/// For the toppling matrix an edge to the deleted site is a sink edge, which
/// is the graph obtained by wiring V \ {0}.
class Volume {
 public:
  Volume(int dim, Point lo, Point hi, std::optional<Point> deleted = std::nullopt)
      : dim_(dim), lo_(std::move(lo)), hi_(std::move(hi)), deleted_(std::move(deleted)) {
    if (dim_ < 1) throw std::invalid_argument("volume dimension must be >= 1");
    if (static_cast<int>(lo_.size()) != dim_ || static_cast<int>(hi_.size()) != dim_)
      throw std::invalid_argument("volume bounds must have one coordinate per axis");
    std::size_t box = 1;
    strides_.assign(dim_, 1);
    for (int a = dim_ - 1; a >= 0; --a) {
      if (lo_[a] > hi_[a]) throw std::invalid_argument("empty box: lo > hi on axis " + std::to_string(a));
      strides_[a] = box;
      box *= static_cast<std::size_t>(hi_[a] - lo_[a] + 1);
    }
    if (deleted_ && !in_box(*deleted_)) throw std::invalid_argument("deleted site lies outside the box");
    if (deleted_ && box == 1) throw std::invalid_argument("deleting the only site leaves an empty volume");

    box_to_site_.assign(box, kOrigin);
    Point p(lo_);
    for (std::size_t off = 0; off < box; ++off) {
      if (!deleted_ || p != *deleted_) {
        box_to_site_[off] = static_cast<Site>(coords_.size() / dim_);
        coords_.insert(coords_.end(), p.begin(), p.end());
      }
      for (int a = dim_ - 1; a >= 0; --a) {
        if (++p[a] <= hi_[a]) break;
        p[a] = lo_[a];
      }
    }

    const std::size_t n = size();
    const int deg = degree();
    nbr_.resize(n * deg);
    sink_edges_.assign(n, 0);
    origin_edges_.assign(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
      Point q(point(static_cast<Site>(s)).begin(), point(static_cast<Site>(s)).end());
      for (int dir = 0; dir < deg; ++dir) {
        const int a = direction_axis(dir);
        q[a] += direction_sign(dir);
        Site t = kSink;
        if (in_box(q)) t = box_to_site_[box_offset(q)];
        q[a] -= direction_sign(dir);
        nbr_[s * deg + dir] = t;
        if (t == kSink) ++sink_edges_[s];
        if (t == kOrigin) {
          ++sink_edges_[s];
          ++origin_edges_[s];
        }
      }
    }
  }

  int dim() const { return dim_; }
  int degree() const { return 2 * dim_; }
  std::size_t size() const { return coords_.size() / dim_; }
  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  const std::optional<Point>& deleted_site() const { return deleted_; }
  bool has_deleted_site() const { return deleted_.has_value(); }

  std::span<const int> point(Site s) const {
    return {coords_.data() + static_cast<std::size_t>(s) * dim_, static_cast<std::size_t>(dim_)};
  }
  Point point_copy(Site s) const {
    auto p = point(s);
    return {p.begin(), p.end()};
  }

  Site neighbor(Site s, int dir) const { return nbr_[static_cast<std::size_t>(s) * degree() + dir]; }
  std::span<const Site> neighbors(Site s) const {
    return {nbr_.data() + static_cast<std::size_t>(s) * degree(), static_cast<std::size_t>(degree())};
  }

  /// Edges from s to the wired sink, counting edges to the deleted site.
  int sink_edges(Site s) const { return sink_edges_[s]; }
  /// Edges from s to the deleted site only.
  int origin_edges(Site s) const { return origin_edges_[s]; }
  int interior_degree(Site s) const { return degree() - sink_edges_[s]; }

  /// Site in the boundary of the box: some lattice neighbour lies outside it.
  bool on_boundary(Site s) const { return sink_edges_[s] > origin_edges_[s]; }

  bool in_box(std::span<const int> p) const {
    if (static_cast<int>(p.size()) != dim_) return false;
    for (int a = 0; a < dim_; ++a)
      if (p[a] < lo_[a] || p[a] > hi_[a]) return false;
    return true;
  }

  std::optional<Site> find(std::span<const int> p) const {
    if (!in_box(p)) return std::nullopt;
    Site s = box_to_site_[box_offset(p)];
    if (s < 0) return std::nullopt;
    return s;
  }

  Site index_of(std::span<const int> p) const {
    auto s = find(p);
    if (!s) throw std::invalid_argument("point is not a site of the volume");
    return *s;
  }

  bool contains(std::span<const int> p) const { return find(p).has_value(); }

  /// Sites adjacent to the deleted site, in site order.
  std::vector<Site> origin_neighbors() const {
    std::vector<Site> out;
    for (Site s = 0; s < static_cast<Site>(size()); ++s)
      if (origin_edges_[s] > 0) out.push_back(s);
    return out;
  }

  /// The same box with p removed.
  VolumePtr punctured(const Point& p) const {
    if (deleted_) throw std::invalid_argument("volume already has a deleted site");
    return std::make_shared<const Volume>(dim_, lo_, hi_, p);
  }

  /// The same box without its deleted site.
  VolumePtr filled() const { return std::make_shared<const Volume>(dim_, lo_, hi_); }

  bool operator==(const Volume& o) const { return dim_ == o.dim_ && lo_ == o.lo_ && hi_ == o.hi_ && deleted_ == o.deleted_; }

 private:
  std::size_t box_offset(std::span<const int> p) const {
    std::size_t off = 0;
    for (int a = 0; a < dim_; ++a) off += static_cast<std::size_t>(p[a] - lo_[a]) * strides_[a];
    return off;
  }

  int dim_;
  Point lo_, hi_;
  std::optional<Point> deleted_;
  std::vector<std::size_t> strides_;
  std::vector<Site> box_to_site_;
  std::vector<int> coords_;
  std::vector<Site> nbr_;
  std::vector<int> sink_edges_;
  std::vector<int> origin_edges_;
};

inline VolumePtr make_volume(int dim, Point lo, Point hi, std::optional<Point> deleted = std::nullopt) {
  return std::make_shared<const Volume>(dim, std::move(lo), std::move(hi), std::move(deleted));
}

/// Box [0, sizes[a] - 1] on each axis.
inline VolumePtr make_box(const std::vector<int>& sizes) {
  Point lo(sizes.size(), 0), hi(sizes.size());
  for (std::size_t a = 0; a < sizes.size(); ++a) hi[a] = sizes[a] - 1;
  return make_volume(static_cast<int>(sizes.size()), std::move(lo), std::move(hi));
}

/// Cube [0, side - 1]^dim.
inline VolumePtr make_cube(int dim, int side) { return make_box(std::vector<int>(dim, side)); }

/// The lattice point closest to the middle of the box (rounded down).
inline Point center_of(const Volume& vol) {
  Point c(vol.dim());
  for (int a = 0; a < vol.dim(); ++a) c[a] = vol.lo()[a] + (vol.hi()[a] - vol.lo()[a]) / 2;
  return c;
}

// ---------------------------------------------------------------------------
// Dense square matrices

template <typename T>
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, const T& fill = T(0)) : n_(n), a_(n * n, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t order() const { return n_; }
  T& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

  bool is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
  }

  friend Matrix operator*(const Matrix& x, const Matrix& y) {
    if (x.n_ != y.n_) throw std::invalid_argument("matrix order mismatch");
    Matrix z(x.n_);
    for (std::size_t i = 0; i < x.n_; ++i)
      for (std::size_t k = 0; k < x.n_; ++k) {
        if (x(i, k) == T(0)) continue;
        for (std::size_t j = 0; j < x.n_; ++j) z(i, j) += x(i, k) * y(k, j);
      }
    return z;
  }

  friend Matrix operator+(Matrix x, const Matrix& y) {
    if (x.n_ != y.n_) throw std::invalid_argument("matrix order mismatch");
    for (std::size_t i = 0; i < x.a_.size(); ++i) x.a_[i] += y.a_[i];
    return x;
  }

  friend Matrix operator-(Matrix x, const Matrix& y) {
    if (x.n_ != y.n_) throw std::invalid_argument("matrix order mismatch");
    for (std::size_t i = 0; i < x.a_.size(); ++i) x.a_[i] -= y.a_[i];
    return x;
  }

  bool operator==(const Matrix& o) const = default;

  /// Principal submatrix on the given index set (in the given order).
  Matrix block(std::span<const std::size_t> idx) const {
    Matrix b(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) b(i, j) = (*this)(idx[i], idx[j]);
    return b;
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> m(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) m(i, j) = static_cast<U>((*this)(i, j));
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::vector<T> a_;
};

/// Delta_V: 2d on the diagonal, -1 between in-volume lattice neighbours.
template <typename T = Integer>
Matrix<T> toppling_matrix(const Volume& vol) {
  const std::size_t n = vol.size();
  Matrix<T> m(n);
  for (Site s = 0; s < static_cast<Site>(n); ++s) {
    m(s, s) = T(vol.degree());
    for (Site t : vol.neighbors(s))
      if (t >= 0) m(s, t) = T(-1);
  }
  return m;
}

/// Fraction-free (Bareiss) elimination; every intermediate stays integral.
inline Integer determinant(Matrix<Integer> m) {
  const std::size_t n = m.order();
  if (n == 0) return 1;
  Integer prev = 1;
  int sign = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (m(k, k) == 0) {
      std::size_t r = k + 1;
      while (r < n && m(r, k) == 0) ++r;
      if (r == n) return 0;
      for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(r, j));
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < n; ++j) m(i, j) = (m(i, j) * m(k, k) - m(i, k) * m(k, j)) / prev;
      m(i, k) = 0;
    }
    prev = m(k, k);
  }
  return sign * m(n - 1, n - 1);
}

inline Rational determinant(Matrix<Rational> m) {
  const std::size_t n = m.order();
  Rational det = 1;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t r = k;
    while (r < n && m(r, k) == 0) ++r;
    if (r == n) return 0;
    if (r != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(r, j));
      det = -det;
    }
    det *= m(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      if (m(i, k) == 0) continue;
      const Rational f = m(i, k) / m(k, k);
      for (std::size_t j = k; j < n; ++j) m(i, j) -= f * m(k, j);
    }
  }
  return det;
}

/// Solves a * x = e_c for every column c in `columns`; returns x column by column.
inline std::vector<std::vector<Rational>> solve_unit_columns(const Matrix<Rational>& a, std::span<const std::size_t> columns) {
  const std::size_t n = a.order();
  const std::size_t m = columns.size();
  std::vector<std::vector<Rational>> aug(n, std::vector<Rational>(n + m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) aug[i][j] = a(i, j);
    for (std::size_t c = 0; c < m; ++c) aug[i][n + c] = (columns[c] == i) ? 1 : 0;
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t r = k;
    while (r < n && aug[r][k] == 0) ++r;
    if (r == n) throw std::domain_error("singular matrix");
    std::swap(aug[k], aug[r]);
    const Rational piv = aug[k][k];
    for (std::size_t j = k; j < n + m; ++j) aug[k][j] /= piv;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k || aug[i][k] == 0) continue;
      const Rational f = aug[i][k];
      for (std::size_t j = k; j < n + m; ++j) aug[i][j] -= f * aug[k][j];
    }
  }
  std::vector<std::vector<Rational>> x(m, std::vector<Rational>(n));
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t i = 0; i < n; ++i) x[c][i] = aug[i][n + c];
  return x;
}

inline Matrix<Rational> inverse(const Matrix<Rational>& a) {
  std::vector<std::size_t> all(a.order());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto cols = solve_unit_columns(a, all);
  Matrix<Rational> inv(a.order());
  for (std::size_t j = 0; j < a.order(); ++j)
    for (std::size_t i = 0; i < a.order(); ++i) inv(i, j) = cols[j][i];
  return inv;
}

/// |R_V| = det(Delta_V), also the number of spanning trees of the wired graph.
inline Integer recurrent_count_via_det(const Volume& vol) { return determinant(toppling_matrix<Integer>(vol)); }

/// G_V = Delta_V^{-1} in exact arithmetic.  Practical up to a few hundred sites.
inline Matrix<Rational> green_function_exact(const Volume& vol) { return inverse(toppling_matrix<Rational>(vol)); }

namespace detail {

inline Eigen::MatrixXd dense_toppling_matrix(const Volume& vol) {
  const auto n = static_cast<Eigen::Index>(vol.size());
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(n, n);
  for (Site s = 0; s < n; ++s) {
    delta(s, s) = vol.degree();
    for (Site t : vol.neighbors(s))
      if (t >= 0) delta(s, t) = -1.0;
  }
  return delta;
}

}  // namespace detail

/// G_V = Delta_V^{-1} in double precision (Cholesky; Delta_V is SPD).
inline Matrix<double> green_function(const Volume& vol) {
  const auto n = static_cast<Eigen::Index>(vol.size());
  Eigen::MatrixXd g = detail::dense_toppling_matrix(vol).llt().solve(Eigen::MatrixXd::Identity(n, n));
  Matrix<double> out(vol.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = g(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Removing one site

/// The neighbourhood N = {u : |u - site| <= 1} intersected with the volume, site first.
inline std::vector<Site> removal_neighborhood(const Volume& vol, Site site) {
  std::vector<Site> nb{site};
  for (Site t : vol.neighbors(site))
    if (t >= 0) nb.push_back(t);
  std::sort(nb.begin() + 1, nb.end());
  return nb;
}

/// Delta'_V: Delta_{V \ {site}} on the other sites, with row and column of
/// `site` replaced by the unit vector, so det(Delta'_V) = det(Delta_{V \ {site}}).
inline Matrix<Integer> reduced_toppling_matrix(const Volume& vol, Site site) {
  Matrix<Integer> m = toppling_matrix<Integer>(vol);
  for (std::size_t j = 0; j < vol.size(); ++j) {
    m(site, j) = 0;
    m(j, site) = 0;
  }
  m(site, site) = 1;
  return m;
}

/// P = Delta'_V - Delta_V.  Throws if its support leaves the neighbourhood
/// of `site` or an entry exceeds 2d - 1 in absolute value.
inline Matrix<Integer> removal_perturbation(const Volume& vol, Site site) {
  if (vol.has_deleted_site()) throw std::invalid_argument("removal on a volume that already has a deleted site");
  if (site < 0 || static_cast<std::size_t>(site) >= vol.size()) throw std::out_of_range("site outside volume");
  Matrix<Integer> p = reduced_toppling_matrix(vol, site) - toppling_matrix<Integer>(vol);
  const auto nb = removal_neighborhood(vol, site);
  auto in_nb = [&](std::size_t x) { return std::find(nb.begin(), nb.end(), static_cast<Site>(x)) != nb.end(); };
  for (std::size_t i = 0; i < vol.size(); ++i)
    for (std::size_t j = 0; j < vol.size(); ++j) {
      if (p(i, j) == 0) continue;
      if (!in_nb(i) || !in_nb(j)) throw std::logic_error("perturbation support leaves the neighbourhood");
      if (abs(p(i, j)) > vol.degree() - 1) throw std::logic_error("perturbation entry exceeds 2d - 1");
    }
  return p;
}

/// det(I + G_V P) restricted to the neighbourhood block, in exact arithmetic.
/// Equals |R_{V \ {site}}| / |R_V|.
inline Rational removal_ratio(const Volume& vol, Site site) {
  const Matrix<Integer> p = removal_perturbation(vol, site);
  const auto nb = removal_neighborhood(vol, site);
  std::vector<std::size_t> cols(nb.begin(), nb.end());
  // G_V is symmetric, so column w restricted to N gives G_V(N, w).
  const auto g_cols = solve_unit_columns(toppling_matrix<Rational>(vol), cols);
  const std::size_t k = nb.size();
  Matrix<Rational> block = Matrix<Rational>::identity(k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      for (std::size_t w = 0; w < k; ++w) {
        const Integer& pw = p(nb[w], nb[b]);
        if (pw != 0) block(a, b) += g_cols[w][nb[a]] * Rational(pw);
      }
  return determinant(std::move(block));
}

/// Floating-point version of removal_ratio for volumes too large for rationals.
inline double removal_ratio_approx(const Volume& vol, Site site) {
  const Matrix<Integer> p = removal_perturbation(vol, site);
  const auto nb = removal_neighborhood(vol, site);
  const auto n = static_cast<Eigen::Index>(vol.size());
  const Eigen::MatrixXd delta = detail::dense_toppling_matrix(vol);
  const auto k = static_cast<Eigen::Index>(nb.size());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index c = 0; c < k; ++c) rhs(nb[c], c) = 1.0;
  Eigen::MatrixXd g = delta.llt().solve(rhs);
  Eigen::MatrixXd block = Eigen::MatrixXd::Identity(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      for (Eigen::Index w = 0; w < k; ++w) block(a, b) += g(nb[a], w) * static_cast<double>(p(nb[w], nb[b]));
  return block.determinant();
}

/// det(Delta_{V \ {site}}) / det(Delta_V), computed from the two determinants.
inline Rational removal_ratio_by_determinants(const Volume& vol, Site site) {
  const VolumePtr cut = vol.punctured(vol.point_copy(site));
  return Rational(recurrent_count_via_det(*cut), recurrent_count_via_det(vol));
}

}  // namespace sandpile
