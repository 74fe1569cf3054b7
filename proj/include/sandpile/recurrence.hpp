#pragma once

// Recurrent configurations: the burning test and exhaustive enumeration.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sandpile/burning.hpp"
#include "sandpile/core.hpp"

namespace sandpile {

struct BurnResult {
  bool recurrent = false;
  /// Step at which each site burnt (1-based); -1 for sites that never burn.
  std::vector<int> burn_time;
  /// The unburnt residue when not recurrent.  It is a forbidden subconfiguration.
  std::vector<Site> forbidden_witness;
};

/// Dhar's burning test from the sink.
inline BurnResult burning_test(const Configuration& cfg) {
  if (!cfg.is_stable()) throw std::invalid_argument("burning_test: configuration must be stable");
  BurnSchedule sch = detail::burn(cfg.volume(), cfg.heights(), BurnMode::Wired);
  BurnResult r;
  r.recurrent = sch.complete;
  if (!r.recurrent)
    for (Site s = 0; s < static_cast<Site>(cfg.size()); ++s)
      if (sch.time[s] < 0) r.forbidden_witness.push_back(s);
  r.burn_time = std::move(sch.time);
  return r;
}

/// True if `sites` is a forbidden subconfiguration of cfg: every x in the set
/// has height at most its number of neighbours inside the set.
inline bool is_forbidden(const Configuration& cfg, std::span<const Site> sites) {
  if (sites.empty()) return false;
  const Volume& vol = cfg.volume();
  std::vector<char> in(vol.size(), 0);
  for (Site s : sites) in[s] = 1;
  for (Site x : sites) {
    int inside = 0;
    for (Site y : vol.neighbors(x))
      if (y >= 0 && in[y]) ++inside;
    if (cfg[x] > inside) return false;
  }
  return true;
}

/// Packs stable configurations into integers: digit (h - 1) in base 2d,
/// site 0 most significant, so numeric order is lexicographic order.
class ConfigCodec {
 public:
  explicit ConfigCodec(const Volume& vol) : base_(vol.degree()), n_(vol.size()) {
    long double states = 1;
    for (std::size_t i = 0; i < n_; ++i) states *= base_;
    if (states > static_cast<long double>(std::numeric_limits<std::uint64_t>::max()))
      throw std::length_error("configuration space does not fit in 64-bit codes");
    count_ = 1;
    for (std::size_t i = 0; i < n_; ++i) count_ *= static_cast<std::uint64_t>(base_);
  }

  std::uint64_t state_count() const { return count_; }

  std::uint64_t encode(std::span<const int> h) const {
    std::uint64_t c = 0;
    for (std::size_t i = 0; i < n_; ++i) c = c * base_ + static_cast<std::uint64_t>(h[i] - 1);
    return c;
  }

  void decode(std::uint64_t code, std::span<int> h) const {
    for (std::size_t i = n_; i-- > 0;) {
      h[i] = static_cast<int>(code % base_) + 1;
      code /= base_;
    }
  }

 private:
  int base_;
  std::size_t n_;
  std::uint64_t count_ = 1;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 24;

/// Codes of all recurrent configurations, in increasing (lexicographic) order.
inline std::vector<std::uint64_t> enumerate_recurrent_codes(const Volume& vol, std::uint64_t cap = kDefaultEnumerationCap) {
  long double states = 1;
  for (std::size_t i = 0; i < vol.size(); ++i) states *= vol.degree();
  if (states > static_cast<long double>(cap))
    throw std::length_error("enumeration cap exceeded: (2d)^|V| > " + std::to_string(cap));
  ConfigCodec codec(vol);
  const std::size_t n = vol.size();
  const int top = vol.degree();
  std::vector<int> h(n, 1);
  std::vector<std::uint64_t> out;
  for (std::uint64_t code = 0; code < codec.state_count(); ++code) {
    if (detail::burn(vol, h, BurnMode::Wired).complete) out.push_back(code);
    for (std::size_t i = n; i-- > 0;) {
      if (++h[i] <= top) break;
      h[i] = 1;
    }
  }
  return out;
}

/// All recurrent configurations of the volume, in lexicographic order.
inline std::vector<Configuration> enumerate_recurrent(const VolumePtr& vol, std::uint64_t cap = kDefaultEnumerationCap) {
  const auto codes = enumerate_recurrent_codes(*vol, cap);
  ConfigCodec codec(*vol);
  std::vector<Configuration> out;
  out.reserve(codes.size());
  std::vector<int> h(vol->size());
  for (std::uint64_t c : codes) {
    codec.decode(c, h);
    out.emplace_back(vol, h);
  }
  return out;
}

}  // namespace sandpile
