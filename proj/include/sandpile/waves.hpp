#pragma once

// Wave decomposition of an avalanche started at a fixed origin, and the
// two-component forests that represent individual waves.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sandpile/burning.hpp"
#include "sandpile/core.hpp"
#include "sandpile/spanning_trees.hpp"

namespace sandpile {

struct WaveDecomposition {
  Site origin = 0;
  /// Xi^1, ..., Xi^alpha: sites toppled in each wave, origin included, sorted.
  std::vector<std::vector<Site>> waves;
  int alpha = 0;
  /// Configuration after each wave (origin height may still exceed 2d).
  std::vector<Configuration> intermediates;
  /// Largest number of topplings of a single site within each wave.
  std::vector<std::int64_t> max_topplings_per_wave;
  AvalancheReport report;
};

/// Adds a grain at `origin` and relaxes wave by wave: topple the origin once,
/// then stabilize everything else with the origin held fixed; repeat while
/// the origin is unstable.
inline WaveDecomposition decompose_waves(const Configuration& cfg, Site origin) {
  const Volume& vol = cfg.volume();
  detail::require_site(vol, origin, "decompose_waves");
  if (!cfg.is_stable() || !cfg.all_positive()) throw std::invalid_argument("decompose_waves: configuration must be stable");
  const int deg = vol.degree();
  WaveDecomposition wd;
  wd.origin = origin;
  wd.report.origin = origin;
  wd.report.topple_count.assign(vol.size(), 0);
  Configuration h = cfg;
  ++h[origin];

  detail::Relaxer relax(vol);
  std::vector<std::int64_t> wave(vol.size());
  std::vector<Site> seeds;
  while (h[origin] > deg) {
    std::fill(wave.begin(), wave.end(), 0);
    h[origin] -= deg;
    wave[origin] = 1;
    seeds.clear();
    for (Site t : vol.neighbors(origin))
      if (t >= 0) {
        ++h[t];
        seeds.push_back(t);
      }
    relax.run(h.heights(), wave, seeds, origin);
    std::int64_t mx = 0;
    for (Site s = 0; s < static_cast<Site>(vol.size()); ++s) {
      wd.report.topple_count[s] += wave[s];
      mx = std::max(mx, wave[s]);
    }
    wd.waves.push_back(detail::support(wave));
    wd.max_topplings_per_wave.push_back(mx);
    wd.intermediates.push_back(h);
  }
  wd.alpha = static_cast<int>(wd.waves.size());
  wd.report.cluster = detail::support(wd.report.topple_count);
  wd.report.result = std::move(h);
  return wd;
}

/// eta restricted to V \ {origin}.
inline Configuration puncture(const Configuration& cfg, Site origin) {
  return restrict_to(cfg, cfg.volume().punctured(cfg.volume().point_copy(origin)));
}

inline Configuration puncture(const Configuration& cfg, Site origin, const VolumePtr& punctured) {
  if (!punctured->deleted_site() || *punctured->deleted_site() != cfg.volume().point_copy(origin))
    throw std::invalid_argument("puncture: volume is not punctured at the origin");
  return restrict_to(cfg, punctured);
}

/// One wave seen from V \ {0}: a grain on every neighbour of the deleted
/// origin, then stabilization in V \ {0}.  Requires a recurrent input.
inline Configuration wave_operator(const Configuration& punctured_cfg) {
  const Volume& vol = punctured_cfg.volume();
  if (!vol.has_deleted_site()) throw std::invalid_argument("wave_operator: configuration must live on a punctured volume");
  if (!punctured_cfg.is_stable() || !punctured_cfg.all_positive())
    throw std::invalid_argument("wave_operator: configuration must be stable");
  if (!detail::burn(vol, punctured_cfg.heights(), BurnMode::Wired).complete)
    throw std::invalid_argument("wave_operator: configuration is not recurrent in V \\ {0}");
  Configuration out = punctured_cfg;
  std::vector<Site> seeds;
  for (Site s = 0; s < static_cast<Site>(vol.size()); ++s)
    if (vol.origin_edges(s) > 0) {
      out[s] += vol.origin_edges(s);
      seeds.push_back(s);
    }
  std::vector<std::int64_t> counts(vol.size(), 0);
  detail::Relaxer(vol).run(out.heights(), counts, seeds);
  return out;
}

/// Forest representing the k-th wave: the two-phase tree of S^{k-1}(eta)
/// on V \ {0}.  Its origin component is Xi^k.
inline Forest wave_tree(const Configuration& cfg, Site origin, int k) {
  if (k < 1) throw std::invalid_argument("wave_tree: wave index starts at 1");
  if (!detail::burn(cfg.volume(), cfg.heights(), BurnMode::Wired).complete)
    throw std::invalid_argument("wave_tree: configuration is not recurrent");
  const WaveDecomposition wd = decompose_waves(cfg, origin);
  if (k > wd.alpha) throw std::out_of_range("wave_tree: wave index exceeds the number of waves");
  Configuration xi = puncture(cfg, origin);
  for (int i = 1; i < k; ++i) xi = wave_operator(xi);
  return config_to_tree(xi, Rooting::SinkAndOrigin);
}

}  // namespace sandpile
