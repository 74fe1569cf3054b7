#pragma once

// Toppling engine: stabilization, addition operators and their inverses,
// the addition Markov chain and finite-volume Poissonian dynamics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sandpile/burning.hpp"
#include "sandpile/lattice.hpp"
#include "sandpile/rng.hpp"

namespace sandpile {

/// Thrown when the engine exceeds its toppling budget.
class StabilizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Height per site of a volume.  Heights live in {1, ..., 2d} when stable;
/// illegal topplings may drive them to any integer.
class Configuration {
 public:
  Configuration() = default;
  Configuration(VolumePtr vol, std::vector<int> heights) : vol_(std::move(vol)), h_(std::move(heights)) {
    if (!vol_) throw std::invalid_argument("configuration needs a volume");
    if (h_.size() != vol_->size()) throw std::invalid_argument("height vector does not match volume size");
  }

  static Configuration constant(VolumePtr vol, int height) {
    const std::size_t n = vol->size();
    return {std::move(vol), std::vector<int>(n, height)};
  }

  /// The all-2d configuration, the maximal stable (and recurrent) one.
  static Configuration maximal(VolumePtr vol) {
    const int h = vol->degree();
    return constant(std::move(vol), h);
  }

  const Volume& volume() const { return *vol_; }
  const VolumePtr& volume_ptr() const { return vol_; }
  std::size_t size() const { return h_.size(); }

  int operator[](Site s) const { return h_[s]; }
  int& operator[](Site s) { return h_[s]; }
  std::span<const int> heights() const { return h_; }
  std::span<int> heights() { return h_; }

  bool is_stable() const {
    const int cap = vol_->degree();
    return std::all_of(h_.begin(), h_.end(), [cap](int h) { return h <= cap; });
  }

  bool all_positive() const {
    return std::all_of(h_.begin(), h_.end(), [](int h) { return h >= 1; });
  }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.h_ == b.h_ && (a.vol_ == b.vol_ || (a.vol_ && b.vol_ && *a.vol_ == *b.vol_));
  }

 private:
  VolumePtr vol_;
  std::vector<int> h_;
};

/// Copies the heights of `cfg` onto the sites of `sub` (matched by coordinates).
inline Configuration restrict_to(const Configuration& cfg, VolumePtr sub) {
  std::vector<int> h(sub->size());
  for (Site s = 0; s < static_cast<Site>(sub->size()); ++s) {
    auto t = cfg.volume().find(sub->point(s));
    if (!t) throw std::invalid_argument("restriction target is not contained in the source volume");
    h[s] = cfg[*t];
  }
  return {std::move(sub), std::move(h)};
}

struct ToppleResult {
  Configuration config;
  bool legal = false;
};

/// T_x: site loses 2d grains, each in-volume neighbour gains one.
inline ToppleResult topple(const Configuration& cfg, Site site) {
  const Volume& vol = cfg.volume();
  if (site < 0 || static_cast<std::size_t>(site) >= vol.size()) throw std::out_of_range("topple: site outside volume");
  ToppleResult r{cfg, cfg[site] > vol.degree()};
  r.config[site] -= vol.degree();
  for (Site t : vol.neighbors(site))
    if (t >= 0) ++r.config[t];
  return r;
}

struct StabilizeOptions {
  /// Upper bound on the total number of topplings before giving up.
  std::int64_t max_topplings = std::int64_t{1} << 40;
};

namespace detail {

/// Relaxes `h` in place with a FIFO of unstable sites, performing every
/// pending toppling of a dequeued site at once.  `frozen` never topples.
/// Topplings are added to `counts`; the total is returned.
class Relaxer {
 public:
  explicit Relaxer(const Volume& vol) : vol_(vol), queued_(vol.size(), 0) { queue_.reserve(64); }

  std::int64_t run(std::span<int> h, std::span<std::int64_t> counts, std::span<const Site> seeds, Site frozen = kSink,
                   std::int64_t cap = StabilizeOptions{}.max_topplings) {
    const int deg = vol_.degree();
    queue_.clear();
    head_ = 0;
    for (Site s : seeds) push(h, s, frozen, deg);
    std::int64_t total = 0;
    while (head_ < queue_.size()) {
      const Site x = queue_[head_++];
      queued_[x] = 0;
      const int k = (h[x] - 1) / deg;
      if (k <= 0) continue;
      h[x] -= k * deg;
      counts[x] += k;
      total += k;
      if (total > cap) throw StabilizationError("stabilization exceeded " + std::to_string(cap) + " topplings");
      for (Site t : vol_.neighbors(x)) {
        if (t < 0) continue;
        h[t] += k;
        push(h, t, frozen, deg);
      }
      if (head_ > 4096 && head_ * 2 > queue_.size()) {
        queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(head_));
        head_ = 0;
      }
    }
    return total;
  }

 private:
  void push(std::span<const int> h, Site s, Site frozen, int deg) {
    if (s != frozen && !queued_[s] && h[s] > deg) {
      queued_[s] = 1;
      queue_.push_back(s);
    }
  }

  const Volume& vol_;
  std::vector<char> queued_;
  std::vector<Site> queue_;
  std::size_t head_ = 0;
};

inline void require_site(const Volume& vol, Site site, const char* what) {
  if (site < 0 || static_cast<std::size_t>(site) >= vol.size()) throw std::out_of_range(std::string(what) + ": site outside volume");
}

}  // namespace detail

struct Stabilization {
  Configuration config;
  std::vector<std::int64_t> topple_count;
};

/// S_V: the stable result of legal topplings, with per-site toppling counts.
inline Stabilization stabilize(Configuration cfg, const StabilizeOptions& opt = {}) {
  if (!cfg.all_positive()) throw std::invalid_argument("stabilize: heights must be >= 1");
  const Volume& vol = cfg.volume();
  std::vector<std::int64_t> counts(vol.size(), 0);
  std::vector<Site> seeds;
  for (Site s = 0; s < static_cast<Site>(vol.size()); ++s)
    if (cfg[s] > vol.degree()) seeds.push_back(s);
  detail::Relaxer(vol).run(cfg.heights(), counts, seeds, kSink, opt.max_topplings);
  return {std::move(cfg), std::move(counts)};
}

/// Result of one addition: N_V(origin, ., eta), the avalanche cluster and a_x eta.
struct AvalancheReport {
  Site origin = 0;
  std::vector<std::int64_t> topple_count;
  std::vector<Site> cluster;
  Configuration result;
};

namespace detail {

inline std::vector<Site> support(std::span<const std::int64_t> counts) {
  std::vector<Site> out;
  for (Site s = 0; s < static_cast<Site>(counts.size()); ++s)
    if (counts[s] > 0) out.push_back(s);
  return out;
}

}  // namespace detail

/// a_{x,V}: add a grain at `site` and stabilize.
inline AvalancheReport add(const Configuration& cfg, Site site, const StabilizeOptions& opt = {}) {
  const Volume& vol = cfg.volume();
  detail::require_site(vol, site, "add");
  if (!cfg.is_stable() || !cfg.all_positive()) throw std::invalid_argument("add: configuration must be stable");
  AvalancheReport r{site, std::vector<std::int64_t>(vol.size(), 0), {}, cfg};
  ++r.result[site];
  const Site seed[] = {site};
  detail::Relaxer(vol).run(r.result.heights(), r.topple_count, seed, kSink, opt.max_topplings);
  r.cluster = detail::support(r.topple_count);
  return r;
}

/// In-place a_{x,V} on raw heights for hot loops.  Returns total topplings.
class Adder {
 public:
  explicit Adder(const Volume& vol) : relax_(vol) {}

  std::int64_t add(std::span<int> h, Site site, std::span<std::int64_t> counts) {
    ++h[site];
    const Site seed[] = {site};
    return relax_.run(h, counts, seed);
  }

 private:
  detail::Relaxer relax_;
};

/// a_{x,V}^{-1} on R_V by orbit iteration: apply a_x until the orbit closes
/// and return the predecessor of cfg.  The caller guarantees cfg is
/// recurrent; a transient input never returns to itself and is reported once
/// the iteration budget det(Delta_V) is spent.
inline Configuration add_inverse_unchecked(const Configuration& cfg, Site site) {
  const Volume& vol = cfg.volume();
  detail::require_site(vol, site, "add_inverse");
  if (!cfg.is_stable() || !cfg.all_positive()) throw std::invalid_argument("add_inverse: configuration must be stable");
  const Integer order = recurrent_count_via_det(vol);
  const std::uint64_t budget = order > Integer(std::numeric_limits<std::uint64_t>::max())
                                   ? std::numeric_limits<std::uint64_t>::max()
                                   : static_cast<std::uint64_t>(order);
  Adder adder(vol);
  std::vector<std::int64_t> scratch(vol.size(), 0);
  std::vector<int> prev(cfg.heights().begin(), cfg.heights().end());
  std::vector<int> cur = prev;
  for (std::uint64_t i = 0; i < budget; ++i) {
    prev = cur;
    adder.add(cur, site, scratch);
    if (std::equal(cur.begin(), cur.end(), cfg.heights().begin())) return {cfg.volume_ptr(), std::move(prev)};
  }
  throw std::invalid_argument("add_inverse: configuration is not recurrent");
}

/// a_{x,V}^{-1}.  Rejects configurations that fail the burning test.
inline Configuration add_inverse(const Configuration& cfg, Site site) {
  if (!cfg.is_stable() || !cfg.all_positive()) throw std::invalid_argument("add_inverse: configuration must be stable");
  if (!detail::burn(cfg.volume(), cfg.heights(), BurnMode::Wired).complete)
    throw std::invalid_argument("add_inverse: configuration is not recurrent");
  return add_inverse_unchecked(cfg, site);
}

/// One step of the addition chain: pick a site from `p` and apply a_x.
inline Configuration markov_step(const Configuration& cfg, std::span<const double> p, Rng& rng) {
  const Volume& vol = cfg.volume();
  if (p.size() != vol.size()) throw std::invalid_argument("markov_step: probability vector size mismatch");
  double total = 0.0;
  for (double q : p) {
    if (!(q > 0.0)) throw std::invalid_argument("markov_step: probabilities must be strictly positive");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("markov_step: probabilities must sum to 1");
  std::discrete_distribution<Site> pick(p.begin(), p.end());
  return add(cfg, pick(rng)).result;
}

struct PoissonEvent {
  double time = 0.0;
  Site site = 0;
};

struct PoissonRun {
  Configuration config;
  std::vector<PoissonEvent> events;
};

/// Independent Poisson addition clocks per site over [0, duration].
/// Samples the superposed process (exponential gaps at the total rate) and
/// attributes each event to a site with probability proportional to its rate.
inline PoissonRun poisson_run(const Configuration& cfg, std::span<const double> rates, double duration, Rng& rng) {
  const Volume& vol = cfg.volume();
  if (rates.size() != vol.size()) throw std::invalid_argument("poisson_run: rate vector size mismatch");
  if (!(duration >= 0.0)) throw std::invalid_argument("poisson_run: duration must be non-negative");
  double total = 0.0;
  for (double r : rates) {
    if (!(r > 0.0)) throw std::invalid_argument("poisson_run: rates must be strictly positive");
    total += r;
  }
  if (!cfg.is_stable() || !cfg.all_positive()) throw std::invalid_argument("poisson_run: configuration must be stable");

  PoissonRun run{cfg, {}};
  std::exponential_distribution<double> gap(total);
  std::discrete_distribution<Site> pick(rates.begin(), rates.end());
  Adder adder(vol);
  std::vector<std::int64_t> scratch(vol.size(), 0);
  double t = gap(rng);
  while (t <= duration) {
    const Site x = pick(rng);
    adder.add(run.config.heights(), x, scratch);
    run.events.push_back({t, x});
    t += gap(rng);
  }
  return run;
}

}  // namespace sandpile
