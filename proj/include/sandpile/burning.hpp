#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "sandpile/lattice.hpp"

namespace sandpile {

/// How the burning is seeded.
enum class BurnMode {
  /// Sink (and the deleted site, if any) burnt at time 0.
  Wired,
  /// Deleted site burnt at time 0; the sink burns one step after the first
  /// phase dies out.  Requires a volume with a deleted site.
  TwoPhase,
};

/// Synchronous burning schedule: at step t every unburnt site whose height
/// exceeds its current number of unburnt neighbours (edges, sink included
/// while the sink is unburnt) burns.
struct BurnSchedule {
  std::vector<int> time;  ///< step at which each site burnt, -1 if never
  int sink_time = 0;
  int origin_time = 0;
  int first_phase_end = 0;  ///< last step of the first phase (TwoPhase only)
  bool complete = false;

  int time_of(Site target) const {
    if (target == kSink) return sink_time;
    if (target == kOrigin) return origin_time;
    return time[target];
  }
};

namespace detail {

inline BurnSchedule burn(const Volume& vol, std::span<const int> h, BurnMode mode) {
  const auto n = static_cast<Site>(vol.size());
  if (mode == BurnMode::TwoPhase && !vol.has_deleted_site())
    throw std::invalid_argument("two-phase burning needs a volume with a deleted site");

  BurnSchedule sch;
  sch.time.assign(n, -1);
  std::vector<int> unburnt(n);
  for (Site s = 0; s < n; ++s)
    unburnt[s] = (mode == BurnMode::Wired) ? vol.interior_degree(s) : vol.degree() - vol.origin_edges(s);

  std::vector<Site> candidates(n), fire, next;
  for (Site s = 0; s < n; ++s) candidates[s] = s;
  std::vector<char> marked(n, 0);
  Site burnt = 0;
  int t = 0;
  bool sink_pending = (mode == BurnMode::TwoPhase);

  while (true) {
    ++t;
    fire.clear();
    for (Site y : candidates)
      if (sch.time[y] < 0 && h[y] > unburnt[y]) fire.push_back(y);
    for (Site y : candidates) marked[y] = 0;

    if (fire.empty()) {
      if (!sink_pending) break;
      // First phase is over; the sink burns now.
      sink_pending = false;
      sch.first_phase_end = t - 1;
      sch.sink_time = t;
      candidates.clear();
      for (Site s = 0; s < n; ++s) {
        const int true_sink = vol.sink_edges(s) - vol.origin_edges(s);
        if (true_sink > 0 && sch.time[s] < 0) {
          unburnt[s] -= true_sink;
          candidates.push_back(s);
        }
      }
      continue;
    }

    next.clear();
    for (Site y : fire) {
      sch.time[y] = t;
      ++burnt;
    }
    for (Site y : fire)
      for (Site z : vol.neighbors(y)) {
        if (z < 0) continue;
        --unburnt[z];
        if (sch.time[z] < 0 && !marked[z]) {
          marked[z] = 1;
          next.push_back(z);
        }
      }
    candidates.swap(next);
  }
  if (mode == BurnMode::Wired) sch.first_phase_end = 0;
  sch.complete = (burnt == n);
  return sch;
}

}  // namespace detail

}  // namespace sandpile
