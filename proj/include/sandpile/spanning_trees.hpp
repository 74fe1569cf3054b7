#pragma once

// Spanning forests of the wired volume: loop erasure, Wilson's algorithm and
// the Majumdar-Dhar correspondence with recurrent configurations.
//
// Height-to-parent table.  A site y that burns at step t has some neighbour
// edges whose endpoint burnt at step t - 1, listed in direction order
// (axis 0 down, axis 0 up, axis 1 down, ...; a sink edge sits at the
// direction of the missing lattice neighbour).  If u is the number of edges
// of y to endpoints still unburnt after step t - 1, the burning rule forces
// u < h(y) <= u + (number of such edges), and the parent of y is the
// (h(y) - u)-th of those edges.  tree_to_config reads the same table
// backwards, taking burn times from depths in the forest.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "sandpile/burning.hpp"
#include "sandpile/core.hpp"
#include "sandpile/rng.hpp"

namespace sandpile {

using Path = std::vector<Site>;

/// Chronological loop erasure: a revisit cuts the path back to the first visit.
template <typename T>
std::vector<T> loop_erase(std::span<const T> path) {
  if (path.empty()) throw std::invalid_argument("loop_erase: empty path");
  std::vector<T> out;
  std::unordered_map<T, std::size_t> pos;
  for (const T& v : path) {
    auto it = pos.find(v);
    if (it != pos.end()) {
      const std::size_t keep = it->second + 1;
      for (std::size_t i = keep; i < out.size(); ++i) pos.erase(out[i]);
      out.resize(keep);
    } else {
      pos.emplace(v, out.size());
      out.push_back(v);
    }
  }
  return out;
}

template <typename T>
std::vector<T> loop_erase(const std::vector<T>& path) {
  return loop_erase(std::span<const T>(path));
}

enum class Rooting {
  /// Spanning tree of the wired graph; edges to a deleted site count as sink edges.
  Sink,
  /// Two-component forest rooted at the sink and at the deleted site.
  SinkAndOrigin,
};

/// A spanning forest stored as one parent direction per site.
class Forest {
 public:
  Forest(VolumePtr vol, std::vector<std::uint8_t> parent_dir, Rooting rooting)
      : vol_(std::move(vol)), parent_(std::move(parent_dir)), rooting_(rooting) {
    if (!vol_) throw std::invalid_argument("forest needs a volume");
    if (parent_.size() != vol_->size()) throw std::invalid_argument("malformed forest: parent vector size mismatch");
    if (rooting_ == Rooting::SinkAndOrigin && !vol_->has_deleted_site())
      throw std::invalid_argument("malformed forest: two-component forest needs a deleted origin");
    for (std::uint8_t d : parent_)
      if (d >= vol_->degree()) throw std::invalid_argument("malformed forest: parent direction out of range");
    if (!acyclic()) throw std::invalid_argument("malformed forest: parent map has a cycle");
  }

  const Volume& volume() const { return *vol_; }
  const VolumePtr& volume_ptr() const { return vol_; }
  Rooting rooting() const { return rooting_; }
  std::size_t size() const { return parent_.size(); }

  int parent_direction(Site s) const { return parent_[s]; }
  std::span<const std::uint8_t> parent_directions() const { return parent_; }

  /// Parent vertex: a site, kSink, or kOrigin (kOrigin only under SinkAndOrigin).
  Site parent(Site s) const {
    const Site t = vol_->neighbor(s, parent_[s]);
    return (t == kOrigin && rooting_ == Rooting::Sink) ? kSink : t;
  }

  /// Distance to the root along parent edges, per site.
  std::vector<int> depths() const {
    std::vector<int> depth(size(), -1);
    std::vector<Site> chain;
    for (Site s = 0; s < static_cast<Site>(size()); ++s) {
      Site u = s;
      while (u >= 0 && depth[u] < 0) {
        chain.push_back(u);
        u = parent(u);
      }
      int base = (u < 0) ? 0 : depth[u];
      while (!chain.empty()) {
        depth[chain.back()] = ++base;
        chain.pop_back();
      }
    }
    return depth;
  }

  /// kSink or kOrigin.
  Site root_of(Site s) const {
    Site u = s;
    while (u >= 0) u = parent(u);
    return u;
  }

  /// Base-2d digits of the parent directions; an injective key for small volumes.
  std::uint64_t code() const {
    std::uint64_t c = 0;
    for (std::uint8_t d : parent_) c = c * static_cast<std::uint64_t>(vol_->degree()) + d;
    return c;
  }

  friend bool operator==(const Forest& a, const Forest& b) {
    return a.rooting_ == b.rooting_ && a.parent_ == b.parent_ && *a.vol_ == *b.vol_;
  }

 private:
  bool acyclic() const {
    // 0 unvisited, 1 on current chain, 2 reaches a root
    std::vector<char> state(size(), 0);
    std::vector<Site> chain;
    for (Site s = 0; s < static_cast<Site>(size()); ++s) {
      Site u = s;
      chain.clear();
      while (u >= 0 && state[u] == 0) {
        state[u] = 1;
        chain.push_back(u);
        u = parent(u);
      }
      if (u >= 0 && state[u] == 1) return false;
      for (Site c : chain) state[c] = 2;
    }
    return true;
  }

  VolumePtr vol_;
  std::vector<std::uint8_t> parent_;
  Rooting rooting_;
};

/// Sites whose parent chain ends at the same root as `site`.
inline std::vector<Site> component_of(const Forest& f, Site site) {
  if (site < 0 || static_cast<std::size_t>(site) >= f.size()) throw std::out_of_range("component_of: site outside volume");
  const Site root = f.root_of(site);
  std::vector<Site> out;
  for (Site s = 0; s < static_cast<Site>(f.size()); ++s)
    if (f.root_of(s) == root) out.push_back(s);
  return out;
}

/// Sites of the component rooted at the deleted origin (the origin itself excluded).
inline std::vector<Site> origin_component(const Forest& f) {
  std::vector<Site> out;
  if (f.rooting() != Rooting::SinkAndOrigin) return out;
  std::vector<char> memo(f.size(), 0);  // 1 origin, 2 sink
  std::vector<Site> chain;
  for (Site s = 0; s < static_cast<Site>(f.size()); ++s) {
    Site u = s;
    chain.clear();
    while (u >= 0 && memo[u] == 0) {
      chain.push_back(u);
      u = f.parent(u);
    }
    const char tag = (u >= 0) ? memo[u] : (u == kOrigin ? 1 : 2);
    for (Site c : chain) memo[c] = tag;
  }
  for (Site s = 0; s < static_cast<Site>(f.size()); ++s)
    if (memo[s] == 1) out.push_back(s);
  return out;
}

/// True if the lattice edge {a, b} belongs to the forest.  Either endpoint
/// may be the deleted origin.
inline bool contains_edge(const Forest& f, std::span<const int> a, std::span<const int> b) {
  const Volume& vol = f.volume();
  auto holds = [&](std::span<const int> from, std::span<const int> to) {
    auto s = vol.find(from);
    if (!s) return false;
    const int dir = f.parent_direction(*s);
    const int axis = direction_axis(dir);
    for (int i = 0; i < vol.dim(); ++i) {
      const int want = from[i] + (i == axis ? direction_sign(dir) : 0);
      if (to[i] != want) return false;
    }
    return true;
  };
  return holds(a, b) || holds(b, a);
}

namespace detail {

inline Forest wilson(const VolumePtr& volp, Rng& rng, std::span<const Site> order, Rooting rooting) {
  const Volume& vol = *volp;
  const auto n = static_cast<Site>(vol.size());
  std::vector<char> in_tree(n, 0);
  std::vector<std::uint8_t> next(n, 0);
  std::uniform_int_distribution<int> step(0, vol.degree() - 1);

  auto grow = [&](Site start) {
    Site u = start;
    while (!in_tree[u]) {
      const int dir = step(rng);
      next[u] = static_cast<std::uint8_t>(dir);
      const Site v = vol.neighbor(u, dir);
      if (v < 0) break;
      u = v;
    }
    // The last exit from each site is its loop-erased successor.
    u = start;
    while (!in_tree[u]) {
      in_tree[u] = 1;
      const Site v = vol.neighbor(u, next[u]);
      if (v < 0) break;
      u = v;
    }
  };

  for (Site s : order) {
    if (s < 0 || s >= n) throw std::out_of_range("wilson: enumeration contains a non-site");
    grow(s);
  }
  for (Site s = 0; s < n; ++s) grow(s);
  return Forest(volp, std::move(next), rooting);
}

}  // namespace detail

/// Uniform spanning tree of the wired graph rooted at the sink.  `order`
/// is the enumeration of starting sites; sites it omits follow in index order.
inline Forest wilson_ust(const VolumePtr& vol, Rng& rng, std::span<const Site> order = {}) {
  return detail::wilson(vol, rng, order, Rooting::Sink);
}

/// Uniform two-component spanning forest rooted at {sink, origin}, where the
/// origin is the deleted site of `punctured`.
inline Forest wilson_two_component(const VolumePtr& punctured, Rng& rng, std::span<const Site> order = {}) {
  if (!punctured->has_deleted_site()) throw std::invalid_argument("wilson_two_component: volume has no deleted origin");
  return detail::wilson(punctured, rng, order, Rooting::SinkAndOrigin);
}

inline Forest wilson_two_component(const Volume& full, const Point& origin, Rng& rng) {
  return wilson_two_component(full.punctured(origin), rng);
}

namespace detail {

/// Parent choice of site y given burn times of all vertices.
/// Returns (u, list of directions burnt at t - 1).
struct ParentChoices {
  int unburnt = 0;
  std::uint8_t dirs[32];
  int count = 0;
};

inline ParentChoices parent_choices(const Volume& vol, Site y, const BurnSchedule& sch) {
  if (vol.degree() > 32) throw std::invalid_argument("tree correspondence supports d <= 16");
  ParentChoices pc;
  const int t = sch.time[y];
  for (int dir = 0; dir < vol.degree(); ++dir) {
    const int tz = sch.time_of(vol.neighbor(y, dir));
    if (tz >= t) ++pc.unburnt;
    if (tz == t - 1) pc.dirs[pc.count++] = static_cast<std::uint8_t>(dir);
  }
  return pc;
}

}  // namespace detail

/// Majumdar-Dhar map from a recurrent configuration to a spanning forest.
/// With Rooting::SinkAndOrigin the configuration lives on V \ {0} and the
/// two-phase burning (origin first, sink after the first phase) is used.
inline Forest config_to_tree(const Configuration& cfg, Rooting rooting = Rooting::Sink) {
  const Volume& vol = cfg.volume();
  if (!cfg.is_stable() || !cfg.all_positive()) throw std::invalid_argument("config_to_tree: configuration must be stable");
  const BurnSchedule sch = detail::burn(vol, cfg.heights(), rooting == Rooting::Sink ? BurnMode::Wired : BurnMode::TwoPhase);
  if (!sch.complete) throw std::invalid_argument("config_to_tree: configuration is not recurrent");
  std::vector<std::uint8_t> parent(vol.size());
  for (Site y = 0; y < static_cast<Site>(vol.size()); ++y) {
    const auto pc = detail::parent_choices(vol, y, sch);
    const int idx = cfg[y] - pc.unburnt - 1;
    if (idx < 0 || idx >= pc.count) throw std::logic_error("config_to_tree: burning schedule violates the threshold rule");
    parent[y] = pc.dirs[idx];
  }
  return Forest(cfg.volume_ptr(), std::move(parent), rooting);
}

/// Inverse of config_to_tree.
inline Configuration tree_to_config(const Forest& f) {
  const Volume& vol = f.volume();
  const auto n = static_cast<Site>(vol.size());
  const std::vector<int> depth = f.depths();
  BurnSchedule sch;
  sch.time.assign(n, 0);
  sch.complete = true;
  if (f.rooting() == Rooting::Sink) {
    sch.time = depth;
  } else {
    std::vector<char> at_origin(n, 0);
    for (Site s : origin_component(f)) at_origin[s] = 1;
    int last = 0;
    for (Site s = 0; s < n; ++s)
      if (at_origin[s]) last = std::max(last, depth[s]);
    sch.first_phase_end = last;
    sch.sink_time = last + 1;
    for (Site s = 0; s < n; ++s) sch.time[s] = at_origin[s] ? depth[s] : sch.sink_time + depth[s];
  }
  std::vector<int> h(n);
  for (Site y = 0; y < n; ++y) {
    const auto pc = detail::parent_choices(vol, y, sch);
    const auto* it = std::find(pc.dirs, pc.dirs + pc.count, static_cast<std::uint8_t>(f.parent_direction(y)));
    if (it == pc.dirs + pc.count) throw std::invalid_argument("tree_to_config: parent is not one step closer to the root");
    h[y] = pc.unburnt + 1 + static_cast<int>(it - pc.dirs);
  }
  return {f.volume_ptr(), std::move(h)};
}

}  // namespace sandpile
