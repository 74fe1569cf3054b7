#pragma once

// The experiments behind the command-line runner.  Each one turns an
// ExperimentSpec into report rows; Monte Carlo work goes through
// run_replicated with one RNG stream per (seed, tag, sample index).

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>

#include "sandpile/core.hpp"
#include "sandpile/harness.hpp"
#include "sandpile/lattice.hpp"
#include "sandpile/recurrence.hpp"
#include "sandpile/sampling.hpp"
#include "sandpile/spanning_trees.hpp"
#include "sandpile/stats.hpp"
#include "sandpile/waves.hpp"

namespace sandpile::harness {

class InfeasibleSize : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Chi-square rows need at least this many expected draws per cell.
inline constexpr std::uint64_t kMinExpectedPerCell = 5;
inline constexpr double kChiSquareThreshold = 0.01;
/// Volumes with more sites than this get float removal ratios only.
inline constexpr std::size_t kExactRemovalLimit = 64;
/// a_x^{-1} is checked exhaustively only when |R_V| is at most this.
inline constexpr std::size_t kInverseCheckLimit = 5000;
inline constexpr int kMarkovSteps = 20;

/// Integer counters and exact moment sums; merging is order independent.
struct Tally {
  std::vector<std::uint64_t> c;
  std::vector<stats::MomentSums> m;

  Tally(std::size_t counters = 0, std::size_t moments = 0) : c(counters, 0), m(moments) {}

  void merge(const Tally& o) {
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += o.c[i];
    for (std::size_t i = 0; i < m.size(); ++i) m[i].merge(o.m[i]);
  }
};

namespace detail {

enum Tag : std::uint64_t {
  kTagDhar = 1,
  kTagUst,
  kTagUstReverse,
  kTagTwoComponent,
  kTagTwoComponentReverse,
  kTagMarkov,
  kTagPoisson,
  kTagWaves,
  kTagAvalanche,
  kTagTreeSize,
  kTagEdges,
};

inline Rng stream(const ExperimentSpec& s, std::uint64_t tag, std::uint64_t index, std::uint64_t sub = 0) {
  return make_stream(s.seed, derive_seed(tag, sub), index);
}

inline VolumePtr spec_volume(const ExperimentSpec& s) { return make_box(s.box); }

inline Site spec_origin(const ExperimentSpec& s, const Volume& vol) {
  const Point p = s.origin ? *s.origin : center_of(vol);
  const auto site = vol.find(p);
  if (!site) throw std::invalid_argument("origin lies outside the box");
  return *site;
}

inline bool enumerable(const Volume& vol) {
  long double states = 1;
  for (std::size_t i = 0; i < vol.size(); ++i) states *= vol.degree();
  return states <= static_cast<long double>(kDefaultEnumerationCap);
}

inline std::vector<std::uint64_t> recurrent_codes(const Volume& vol) {
  if (!enumerable(vol)) throw InfeasibleSize("volume too large to enumerate: (2d)^|V| exceeds 2^24");
  return enumerate_recurrent_codes(vol);
}

inline std::vector<Configuration> recurrent_set(const VolumePtr& vol) {
  if (!enumerable(*vol)) throw InfeasibleSize("volume too large to enumerate: (2d)^|V| exceeds 2^24");
  return enumerate_recurrent(vol);
}

inline void require_cells(std::uint64_t samples, std::size_t cells) {
  if (samples < kMinExpectedPerCell * cells)
    throw std::invalid_argument("chi-square test on " + std::to_string(cells) + " cells needs at least " +
                                std::to_string(kMinExpectedPerCell * cells) + " samples");
}

inline Row exact_row(std::string name, std::string estimate, std::string target) {
  const bool ok = estimate == target;
  return {std::move(name), std::move(estimate), std::nullopt, std::move(target), "exact", ok};
}

inline Row count_row(std::string name, std::uint64_t hits, std::uint64_t total) {
  return exact_row(std::move(name), std::to_string(hits), std::to_string(total));
}

inline Row info_row(std::string name, double estimate, std::optional<double> se = std::nullopt) {
  return {std::move(name), fmt_double(estimate), se, "", "", std::nullopt};
}

/// |estimate - target| <= k stderr.
inline Row near_row(std::string name, double estimate, double se, double target, int k) {
  const bool ok = std::abs(estimate - target) <= k * se;
  return {std::move(name), fmt_double(estimate), se, fmt_double(target), std::to_string(k) + " stderr", ok};
}

inline Row chi_row(std::string name, const stats::ChiSquare& chi) {
  return {std::move(name), fmt_double(chi.p_value), std::nullopt, "chi2(" + std::to_string(chi.dof) + ")",
          "p>0.01", chi.p_value > kChiSquareThreshold};
}

/// next - prev compared against zero with 2 stderr of slack in the allowed direction.
inline Row trend_row(std::string name, double prev, double prev_se, double next, double next_se, bool increasing) {
  const double diff = next - prev;
  const double se = std::sqrt(prev_se * prev_se + next_se * next_se);
  const bool ok = increasing ? diff >= -2 * se : diff <= 2 * se;
  return {std::move(name), fmt_double(diff), se, increasing ? ">=0" : "<=0", "2 stderr", ok};
}

inline std::string site_label(Site s) { return std::to_string(s); }

/// Side ladder for nested-box experiments: explicit list or {L/2, 3L/4, L}.
inline std::vector<int> nested_sides(const ExperimentSpec& s) {
  std::vector<int> sides = s.nested;
  if (sides.empty()) {
    const int L = *std::max_element(s.box.begin(), s.box.end());
    sides = {L / 2, (3 * L) / 4, L};
  }
  std::erase_if(sides, [](int x) { return x < 2; });
  std::sort(sides.begin(), sides.end());
  sides.erase(std::unique(sides.begin(), sides.end()), sides.end());
  if (sides.empty()) throw std::invalid_argument("nested-box experiments need side lengths of at least 2");
  return sides;
}

inline std::string L_label(int L) { return "[L=" + std::to_string(L) + "]"; }

/// Bin 0 holds 0; bin k >= 1 holds [2^(k-1), 2^k - 1].
inline std::size_t log2_bin(std::uint64_t x) {
  std::size_t b = 0;
  while (x) {
    ++b;
    x >>= 1;
  }
  return b;
}

inline std::string log2_bin_label(std::size_t b) {
  if (b == 0) return "[0]";
  const std::uint64_t lo = std::uint64_t{1} << (b - 1);
  return "[" + std::to_string(lo) + "-" + std::to_string(2 * lo - 1) + "]";
}

inline std::vector<double> green_column(const Volume& vol, Site x) {
  const Eigen::MatrixXd delta = sandpile::detail::dense_toppling_matrix(vol);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vol.size()));
  e(x) = 1.0;
  const Eigen::VectorXd g = delta.llt().solve(e);
  return {g.data(), g.data() + g.size()};
}

// ---------------------------------------------------------------------------

inline void det_identity(const ExperimentSpec& s, std::vector<Row>& rows) {
  auto vol = spec_volume(s);
  const auto codes = recurrent_codes(*vol);
  rows.push_back(exact_row("recurrent_count", std::to_string(codes.size()), fmt_exact(recurrent_count_via_det(*vol))));
  if (s.origin) {
    auto cut = vol->punctured(*s.origin);
    rows.push_back(exact_row("recurrent_count_punctured", std::to_string(recurrent_codes(*cut).size()),
                             fmt_exact(recurrent_count_via_det(*cut))));
  }
}

inline void dhar_exact(const VolumePtr& vol, std::vector<Row>& rows) {
  const auto all = recurrent_set(vol);
  const std::size_t n = vol->size();
  std::vector<std::int64_t> sums(n * n, 0);
  Adder adder(*vol);
  std::vector<int> h(n);
  for (Site x = 0; x < static_cast<Site>(n); ++x) {
    std::span<std::int64_t> row(sums.data() + x * n, n);
    for (const auto& eta : all) {
      std::copy(eta.heights().begin(), eta.heights().end(), h.begin());
      adder.add(h, x, row);
    }
  }
  const auto g = green_function_exact(*vol);
  const auto count = static_cast<std::int64_t>(all.size());
  std::uint64_t matched = 0;
  const bool per_pair = n <= 16;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y) {
      const Rational mean(sums[x * n + y], count);
      if (mean == g(x, y)) ++matched;
      if (per_pair)
        rows.push_back(exact_row("mean_N[x=" + site_label(x) + "][y=" + site_label(y) + "]", fmt_exact(mean), fmt_exact(g(x, y))));
    }
  rows.push_back(count_row("pairs_matching_green_function", matched, n * n));
}

inline void dhar_mc(const ExperimentSpec& s, const VolumePtr& vol, std::vector<Row>& rows) {
  const Site x = spec_origin(s, *vol);
  std::vector<Site> ys{x};
  for (Site t : vol->neighbors(x))
    if (t >= 0) ys.push_back(t);
  ys.push_back(0);
  ys.push_back(static_cast<Site>(vol->size()) - 1);
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  const Tally t = run_replicated<Tally>(
      s.samples, s.replicas, [&] { return Tally(0, ys.size() + 1); },
      [&](Tally& acc, std::uint64_t i) {
        Rng rng = stream(s, kTagDhar, i);
        Configuration eta = sample_recurrent(vol, rng);
        std::vector<std::int64_t> cnt(vol->size(), 0);
        const std::int64_t total = Adder(*vol).add(eta.heights(), x, cnt);
        for (std::size_t k = 0; k < ys.size(); ++k) acc.m[k].add(cnt[ys[k]]);
        acc.m[ys.size()].add(total);
      });

  const auto g = green_column(*vol, x);
  for (std::size_t k = 0; k < ys.size(); ++k)
    rows.push_back(near_row("mean_N[x=" + site_label(x) + "][y=" + site_label(ys[k]) + "]", t.m[k].mean(),
                            t.m[k].stderr_of_mean(), g[ys[k]], 3));
  double gsum = 0;
  for (double v : g) gsum += v;
  rows.push_back(near_row("mean_total_topplings[x=" + site_label(x) + "]", t.m[ys.size()].mean(),
                          t.m[ys.size()].stderr_of_mean(), gsum, 3));
}

inline void dhar_check(const ExperimentSpec& s, std::vector<Row>& rows) {
  auto vol = spec_volume(s);
  const bool exact = s.method == "exact" || (s.method == "auto" && enumerable(*vol));
  if (exact)
    dhar_exact(vol, rows);
  else
    dhar_mc(s, vol, rows);
}

inline void bijection_roundtrip(const ExperimentSpec& s, std::vector<Row>& rows) {
  auto vol = spec_volume(s);
  auto check = [&](const VolumePtr& v, Rooting rooting, const std::string& prefix) {
    const auto all = recurrent_set(v);
    std::set<std::uint64_t> images;
    std::uint64_t back = 0;
    for (const auto& eta : all) {
      const Forest f = config_to_tree(eta, rooting);
      images.insert(f.code());
      if (tree_to_config(f) == eta) ++back;
    }
    rows.push_back(exact_row(prefix + "distinct_images", std::to_string(images.size()), fmt_exact(recurrent_count_via_det(*v))));
    rows.push_back(count_row(prefix + "roundtrip", back, all.size()));
  };
  check(vol, Rooting::Sink, "tree_");
  if (vol->size() > 1) check(vol->punctured(vol->point_copy(spec_origin(s, *vol))), Rooting::SinkAndOrigin, "two_component_");
}

inline void ust_uniformity(const ExperimentSpec& s, std::vector<Row>& rows) {
  auto vol = spec_volume(s);
  struct Variant {
    VolumePtr v;
    Rooting rooting;
    std::string prefix;
    std::uint64_t tag, tag_rev;
    std::unordered_map<std::uint64_t, std::size_t> slot;
    std::vector<Site> reverse;
    std::size_t offset = 0;
  };
  std::vector<Variant> variants;
  variants.push_back({vol, Rooting::Sink, "ust_", kTagUst, kTagUstReverse, {}, {}, 0});
  if (vol->size() > 1)
    variants.push_back({vol->punctured(vol->point_copy(spec_origin(s, *vol))), Rooting::SinkAndOrigin, "two_component_",
                        kTagTwoComponent, kTagTwoComponentReverse, {}, {}, 0});

  std::size_t cells = 0;
  for (auto& var : variants) {
    for (const auto& eta : recurrent_set(var.v)) var.slot.emplace(config_to_tree(eta, var.rooting).code(), var.slot.size());
    require_cells(s.samples, var.slot.size());
    for (Site x = static_cast<Site>(var.v->size()); x-- > 0;) var.reverse.push_back(x);
    var.offset = cells;
    cells += 2 * var.slot.size();
  }
  const std::size_t outside = cells;

  const Tally t = run_replicated<Tally>(
      s.samples, s.replicas, [&] { return Tally(cells + 1, 0); },
      [&](Tally& acc, std::uint64_t i) {
        for (const auto& var : variants) {
          for (int pass = 0; pass < 2; ++pass) {
            Rng rng = stream(s, pass ? var.tag_rev : var.tag, i);
            std::span<const Site> order;
            if (pass) order = var.reverse;
            const Forest f = sandpile::detail::wilson(var.v, rng, order, var.rooting);
            const auto it = var.slot.find(f.code());
            if (it == var.slot.end())
              ++acc.c[outside];
            else
              ++acc.c[var.offset + pass * var.slot.size() + it->second];
          }
        }
      });

  rows.push_back(count_row("draws_outside_enumerated_set", t.c[outside], 0));
  for (const auto& var : variants) {
    const std::size_t k = var.slot.size();
    std::span<const std::uint64_t> fwd(t.c.data() + var.offset, k), rev(t.c.data() + var.offset + k, k);
    rows.push_back(info_row(var.prefix + "cells", static_cast<double>(k)));
    rows.push_back(chi_row(var.prefix + "chi2_pvalue[order=row-major]", stats::chi_square_uniform(fwd)));
    rows.push_back(chi_row(var.prefix + "chi2_pvalue[order=reverse]", stats::chi_square_uniform(rev)));
    rows.push_back(chi_row(var.prefix + "order_invariance_pvalue", stats::chi_square_homogeneity(fwd, rev)));
  }
}

inline void stationarity(const ExperimentSpec& s, std::vector<Row>& rows) {
  auto vol = spec_volume(s);
  const auto all = recurrent_set(vol);
  ConfigCodec codec(*vol);
  std::vector<std::uint64_t> domain;
  domain.reserve(all.size());
  for (const auto& eta : all) domain.push_back(codec.encode(eta.heights()));
  const std::size_t n = vol->size();

  std::uint64_t permuting = 0;
  Adder adder(*vol);
  std::vector<int> h(n);
  std::vector<std::int64_t> scratch(n);
  for (Site x = 0; x < static_cast<Site>(n); ++x) {
    std::vector<std::uint64_t> image;
    image.reserve(all.size());
    for (const auto& eta : all) {
      std::copy(eta.heights().begin(), eta.heights().end(), h.begin());
      adder.add(h, x, scratch);
      image.push_back(codec.encode(h));
    }
    std::sort(image.begin(), image.end());
    if (image == domain) ++permuting;
  }
  rows.push_back(count_row("a_x_permutes_recurrent_set", permuting, n));

  if (all.size() <= kInverseCheckLimit) {
    std::uint64_t ok = 0;
    for (const auto& eta : all)
      for (Site x = 0; x < static_cast<Site>(n); ++x)
        if (add(add_inverse_unchecked(eta, x), x).result == eta && add_inverse_unchecked(add(eta, x).result, x) == eta) ++ok;
    rows.push_back(count_row("inverse_roundtrip_pairs", ok, all.size() * n));
  }

  if (s.samples < kMinExpectedPerCell * all.size()) return;
  std::unordered_map<std::uint64_t, std::size_t> slot;
  for (std::size_t i = 0; i < domain.size(); ++i) slot.emplace(domain[i], i);
  const std::size_t k = all.size();

  // Each sample starts from an exact uniform draw and runs a few steps, so
  // the recorded states are independent and uniform iff the law is invariant.
  const std::vector<double> p(n, 1.0 / static_cast<double>(n));
  const Tally markov = run_replicated<Tally>(
      s.samples, s.replicas, [&] { return Tally(k, 0); },
      [&](Tally& acc, std::uint64_t i) {
        Rng rng = stream(s, kTagMarkov, i);
        Configuration eta = sample_recurrent(vol, rng);
        for (int step = 0; step < kMarkovSteps; ++step) eta = markov_step(eta, p, rng);
        ++acc.c[slot.at(codec.encode(eta.heights()))];
      });
  rows.push_back(chi_row("markov_chain_chi2_pvalue", stats::chi_square_uniform(markov.c)));

  std::vector<double> rates(n);
  for (std::size_t i = 0; i < n; ++i) rates[i] = 0.5 + 0.5 * static_cast<double>(i % 3);
  const Tally poisson = run_replicated<Tally>(
      s.samples, s.replicas, [&] { return Tally(k, 0); },
      [&](Tally& acc, std::uint64_t i) {
        Rng rng = stream(s, kTagPoisson, i);
        const Configuration start = sample_recurrent(vol, rng);
        ++acc.c[slot.at(codec.encode(poisson_run(start, rates, 1.0, rng).config.heights()))];
      });
  rows.push_back(chi_row("poisson_run_chi2_pvalue", stats::chi_square_uniform(poisson.c)));
}

inline void wave_tree_identity(const ExperimentSpec& s, std::vector<Row>& rows) {
  auto vol = spec_volume(s);
  const Site origin = spec_origin(s, *vol);
  auto cut = vol->punctured(vol->point_copy(origin));
  enum { kAlpha, kUnion, kSingle, kMultiplicity, kTree, kMulti, kCounters };

  const Tally t = run_replicated<Tally>(
      s.samples, s.replicas, [] { return Tally(kCounters, 1); },
      [&](Tally& acc, std::uint64_t i) {
        Rng rng = stream(s, kTagWaves, i);
        Configuration eta = sample_recurrent(vol, rng);
        eta[origin] = vol->degree();
        const auto wd = decompose_waves(eta, origin);
        const auto ref = add(eta, origin);
        acc.m[0].add(wd.alpha);
        if (wd.alpha >= 2) ++acc.c[kMulti];
        if (wd.alpha == ref.topple_count[origin]) ++acc.c[kAlpha];
        std::vector<std::int64_t> mult(vol->size(), 0);
        for (const auto& w : wd.waves)
          for (Site x : w) ++mult[x];
        if (sandpile::detail::support(mult) == ref.cluster) ++acc.c[kUnion];
        if (mult == ref.topple_count) ++acc.c[kMultiplicity];
        if (std::all_of(wd.max_topplings_per_wave.begin(), wd.max_topplings_per_wave.end(), [](auto m) { return m == 1; }))
          ++acc.c[kSingle];
        Configuration xi = puncture(eta, origin, cut);
        bool trees = true;
        for (int k = 0; k < wd.alpha && trees; ++k) {
          const Forest f = config_to_tree(xi, Rooting::SinkAndOrigin);
          std::vector<Site> vs{origin};
          for (Site x : origin_component(f)) vs.push_back(vol->index_of(cut->point(x)));
          std::sort(vs.begin(), vs.end());
          trees = vs == wd.waves[k];
          xi = wave_operator(xi);
        }
        if (trees) ++acc.c[kTree];
      });

  rows.push_back(count_row("alpha_equals_origin_topplings", t.c[kAlpha], s.samples));
  rows.push_back(count_row("wave_union_equals_cluster", t.c[kUnion], s.samples));
  rows.push_back(count_row("wave_multiplicity_equals_topplings", t.c[kMultiplicity], s.samples));
  rows.push_back(count_row("single_toppling_per_wave", t.c[kSingle], s.samples));
  rows.push_back(count_row("wave_tree_vertex_sets", t.c[kTree], s.samples));
  rows.push_back(info_row("mean_alpha", t.m[0].mean(), t.m[0].stderr_of_mean()));
  rows.push_back(info_row("multi_wave_fraction", static_cast<double>(t.c[kMulti]) / static_cast<double>(s.samples),
                          stats::binomial_stderr(t.c[kMulti], s.samples)));
}

inline void removal_ratio_experiment(const ExperimentSpec& s, std::vector<Row>& rows) {
  auto vol = spec_volume(s);
  const Site origin = spec_origin(s, *vol);
  const std::string where = "[x=" + site_label(origin) + "]";
  if (vol->size() <= kExactRemovalLimit) {
    const Rational r = removal_ratio(*vol, origin);
    rows.push_back(exact_row("removal_ratio_vs_determinants" + where, fmt_exact(r), fmt_exact(removal_ratio_by_determinants(*vol, origin))));
    auto cut = vol->punctured(vol->point_copy(origin));
    if (enumerable(*vol) && enumerable(*cut)) {
      const Rational counted(static_cast<std::int64_t>(recurrent_codes(*cut).size()), static_cast<std::int64_t>(recurrent_codes(*vol).size()));
      rows.push_back(exact_row("removal_ratio_vs_counts" + where, fmt_exact(r), fmt_exact(counted)));
    }
  }
  rows.push_back(info_row("removal_ratio_float" + where, removal_ratio_approx(*vol, origin)));

  std::vector<int> sides = s.nested;
  if (sides.empty())
    for (int L = 2; L <= *std::max_element(s.box.begin(), s.box.end()); ++L) sides.push_back(L);
  double worst = 0;
  for (int L : sides) {
    if (L < 2) continue;
    auto cube = make_cube(s.d, L);
    const double r = removal_ratio_approx(*cube, cube->index_of(center_of(*cube)));
    worst = std::max(worst, r);
    rows.push_back(info_row("removal_ratio_center" + L_label(L), r));
  }
  rows.push_back(info_row("removal_ratio_max_over_nested", worst));
}

inline void avalanche_stats(const ExperimentSpec& s, std::vector<Row>& rows) {
  const auto sides = nested_sides(s);
  const int inner = sides.front();
  struct Summary {
    double escape, escape_se;
  };
  std::vector<Summary> summary;
  for (int L : sides) {
    auto vol = make_cube(s.d, L);
    const Point c = center_of(*vol);
    const Site origin = vol->index_of(c);
    Point lo(s.d), hi(s.d);
    for (int a = 0; a < s.d; ++a) {
      lo[a] = c[a] - (inner - 1) / 2;
      hi[a] = lo[a] + inner - 1;
    }
    auto inside = [&](std::span<const int> p) {
      for (int a = 0; a < s.d; ++a)
        if (p[a] < lo[a] || p[a] > hi[a]) return false;
      return true;
    };
    const std::size_t size_bins = log2_bin(vol->size()) + 1;
    const std::size_t diam_bins = static_cast<std::size_t>(L) + 1;
    enum { kEscape, kWave1, kWave2, kMulti, kHist };
    const Tally t = run_replicated<Tally>(
        s.samples, s.replicas, [&] { return Tally(kHist + size_bins + diam_bins, 3); },
        [&](Tally& acc, std::uint64_t i) {
          Rng rng = stream(s, kTagAvalanche, i, static_cast<std::uint64_t>(L));
          const Configuration eta = sample_recurrent(vol, rng);
          const auto wd = decompose_waves(eta, origin);
          const auto& cluster = wd.report.cluster;
          std::int64_t topplings = 0;
          for (auto k : wd.report.topple_count) topplings += k;
          int diameter = 0;
          if (!cluster.empty()) {
            for (int a = 0; a < s.d; ++a) {
              int mn = vol->point(cluster[0])[a], mx = mn;
              for (Site x : cluster) {
                mn = std::min(mn, vol->point(x)[a]);
                mx = std::max(mx, vol->point(x)[a]);
              }
              diameter = std::max(diameter, mx - mn + 1);
            }
          }
          if (std::any_of(cluster.begin(), cluster.end(), [&](Site x) { return vol->on_boundary(x); })) ++acc.c[kEscape];
          for (int w = 0; w < std::min(wd.alpha, 2); ++w)
            if (std::any_of(wd.waves[w].begin(), wd.waves[w].end(), [&](Site x) { return !inside(vol->point(x)); })) ++acc.c[kWave1 + w];
          if (wd.alpha >= 2) ++acc.c[kMulti];
          ++acc.c[kHist + log2_bin(cluster.size())];
          ++acc.c[kHist + size_bins + diameter];
          acc.m[0].add(static_cast<std::int64_t>(cluster.size()));
          acc.m[1].add(topplings);
          acc.m[2].add(diameter);
        });
    const auto n = s.samples;
    auto freq = [&](std::uint64_t k) { return static_cast<double>(k) / static_cast<double>(n); };
    const std::string tag = L_label(L);
    rows.push_back(info_row("escape_frequency" + tag, freq(t.c[kEscape]), stats::binomial_stderr(t.c[kEscape], n)));
    rows.push_back(info_row("wave1_escape_inner" + tag, freq(t.c[kWave1]), stats::binomial_stderr(t.c[kWave1], n)));
    rows.push_back(info_row("wave2_escape_inner" + tag, freq(t.c[kWave2]), stats::binomial_stderr(t.c[kWave2], n)));
    rows.push_back(info_row("multi_wave_fraction" + tag, freq(t.c[kMulti]), stats::binomial_stderr(t.c[kMulti], n)));
    rows.push_back(info_row("mean_cluster_size" + tag, t.m[0].mean(), t.m[0].stderr_of_mean()));
    rows.push_back(info_row("mean_topplings" + tag, t.m[1].mean(), t.m[1].stderr_of_mean()));
    rows.push_back(info_row("mean_diameter" + tag, t.m[2].mean(), t.m[2].stderr_of_mean()));
    for (std::size_t b = 0; b < size_bins; ++b)
      rows.push_back(info_row("size_hist" + tag + log2_bin_label(b), freq(t.c[kHist + b])));
    for (std::size_t b = 0; b < diam_bins; ++b)
      rows.push_back(info_row("diameter_hist" + tag + "[" + std::to_string(b) + "]", freq(t.c[kHist + size_bins + b])));
    summary.push_back({freq(t.c[kEscape]), stats::binomial_stderr(t.c[kEscape], n)});
  }
  for (std::size_t i = 1; i < sides.size(); ++i)
    rows.push_back(trend_row("escape_nonincreasing[L=" + std::to_string(sides[i - 1]) + "->" + std::to_string(sides[i]) + "]",
                             summary[i - 1].escape, summary[i - 1].escape_se, summary[i].escape, summary[i].escape_se, false));
}

inline void two_component_size(const ExperimentSpec& s, std::vector<Row>& rows) {
  const auto sides = nested_sides(s);
  const std::uint64_t tails[] = {10, 100};
  struct Summary {
    double reach, reach_se;
    double tail[2], tail_se[2];
  };
  std::vector<Summary> summary;
  for (int L : sides) {
    auto cut = make_cube(s.d, L)->punctured(center_of(*make_cube(s.d, L)));
    const std::size_t bins = log2_bin(cut->size() + 1) + 1;
    enum { kReach, kTail0, kTail1, kHist };
    const Tally t = run_replicated<Tally>(
        s.samples, s.replicas, [&] { return Tally(kHist + bins, 1); },
        [&](Tally& acc, std::uint64_t i) {
          Rng rng = stream(s, kTagTreeSize, i, static_cast<std::uint64_t>(L));
          const Forest f = wilson_two_component(cut, rng);
          const auto comp = origin_component(f);
          const std::uint64_t size = comp.size() + 1;
          if (std::any_of(comp.begin(), comp.end(), [&](Site x) { return cut->on_boundary(x); })) ++acc.c[kReach];
          if (size > tails[0]) ++acc.c[kTail0];
          if (size > tails[1]) ++acc.c[kTail1];
          ++acc.c[kHist + log2_bin(size)];
          acc.m[0].add(static_cast<std::int64_t>(size));
        });
    const auto n = s.samples;
    auto freq = [&](std::uint64_t k) { return static_cast<double>(k) / static_cast<double>(n); };
    const std::string tag = L_label(L);
    Summary sm{freq(t.c[kReach]), stats::binomial_stderr(t.c[kReach], n), {}, {}};
    rows.push_back(info_row("T_reaches_boundary" + tag, sm.reach, sm.reach_se));
    rows.push_back(info_row("mean_T_size" + tag, t.m[0].mean(), t.m[0].stderr_of_mean()));
    for (int k = 0; k < 2; ++k) {
      sm.tail[k] = freq(t.c[kTail0 + k]);
      sm.tail_se[k] = stats::binomial_stderr(t.c[kTail0 + k], n);
      rows.push_back(info_row("T_tail_gt" + std::to_string(tails[k]) + tag, sm.tail[k], sm.tail_se[k]));
    }
    for (std::size_t b = 1; b < bins; ++b) rows.push_back(info_row("T_size_hist" + tag + log2_bin_label(b), freq(t.c[kHist + b])));
    summary.push_back(sm);
  }
  for (std::size_t i = 1; i < sides.size(); ++i) {
    const std::string step = "[L=" + std::to_string(sides[i - 1]) + "->" + std::to_string(sides[i]) + "]";
    rows.push_back(trend_row("T_boundary_reach_nonincreasing" + step, summary[i - 1].reach, summary[i - 1].reach_se,
                             summary[i].reach, summary[i].reach_se, false));
    for (int k = 0; k < 2; ++k) {
      const double diff = summary[i].tail[k] - summary[i - 1].tail[k];
      const double se = std::hypot(summary[i].tail_se[k], summary[i - 1].tail_se[k]);
      rows.push_back(info_row("T_tail_gt" + std::to_string(tails[k]) + "_change" + step, diff, se));
    }
  }
}

inline void monotone_edge_prob(const ExperimentSpec& s, std::vector<Row>& rows) {
  const auto sides = nested_sides(s);
  const int d = s.d;
  auto unit = [&](int axis, int sign) {
    Point p(d, 0);
    p[axis] = sign;
    return p;
  };
  auto plus = [](Point a, const Point& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
  };
  // Edge sets near the origin, as offsets from it.
  struct EdgeSet {
    std::string label;
    std::vector<std::pair<Point, Point>> edges;
  };
  const Point zero(d, 0);
  std::vector<EdgeSet> sets{{"0~e1", {{zero, unit(0, 1)}}}, {"0~e1&0~-e1", {{zero, unit(0, 1)}, {zero, unit(0, -1)}}}};
  if (d >= 2) sets.push_back({"e1~e1+e2", {{unit(0, 1), plus(unit(0, 1), unit(1, 1))}}});

  std::vector<std::vector<std::pair<double, double>>> est(sets.size());
  for (int L : sides) {
    auto full = make_cube(d, L);
    const Point c = center_of(*full);
    auto cut = full->punctured(c);
    const Tally t = run_replicated<Tally>(
        s.samples, s.replicas, [&] { return Tally(sets.size(), 0); },
        [&](Tally& acc, std::uint64_t i) {
          Rng rng = stream(s, kTagEdges, i, static_cast<std::uint64_t>(L));
          const Forest f = wilson_two_component(cut, rng);
          for (std::size_t b = 0; b < sets.size(); ++b) {
            bool all = true;
            for (const auto& [u, v] : sets[b].edges) all = all && contains_edge(f, plus(c, u), plus(c, v));
            if (all) ++acc.c[b];
          }
        });
    for (std::size_t b = 0; b < sets.size(); ++b) {
      const double p = static_cast<double>(t.c[b]) / static_cast<double>(s.samples);
      const double se = stats::binomial_stderr(t.c[b], s.samples);
      est[b].push_back({p, se});
      rows.push_back(info_row("edge_prob[" + sets[b].label + "]" + L_label(L), p, se));
    }
  }
  for (std::size_t b = 0; b < sets.size(); ++b)
    for (std::size_t i = 1; i < sides.size(); ++i)
      rows.push_back(trend_row("edge_prob_nondecreasing[" + sets[b].label + "][L=" + std::to_string(sides[i - 1]) + "->" +
                                   std::to_string(sides[i]) + "]",
                               est[b][i - 1].first, est[b][i - 1].second, est[b][i].first, est[b][i].second, true));
}

}  // namespace detail

using ExperimentFn = std::function<void(const ExperimentSpec&, std::vector<Row>&)>;

inline const std::map<std::string, ExperimentFn>& experiments() {
  static const std::map<std::string, ExperimentFn> table{
      {"det-identity", detail::det_identity},
      {"dhar-check", detail::dhar_check},
      {"bijection-roundtrip", detail::bijection_roundtrip},
      {"ust-uniformity", detail::ust_uniformity},
      {"stationarity", detail::stationarity},
      {"wave-tree-identity", detail::wave_tree_identity},
      {"removal-ratio", detail::removal_ratio_experiment},
      {"avalanche-stats", detail::avalanche_stats},
      {"two-component-size", detail::two_component_size},
      {"monotone-edge-prob", detail::monotone_edge_prob},
  };
  return table;
}

inline void validate(const ExperimentSpec& s) {
  if (!experiments().contains(s.experiment)) throw std::invalid_argument("unknown experiment: '" + s.experiment + "'");
  if (s.d < 1 || s.d > 16) throw std::invalid_argument("dimension must be between 1 and 16");
  if (static_cast<int>(s.box.size()) != s.d) throw std::invalid_argument("box must have d side lengths");
  for (int x : s.box)
    if (x < 1) throw std::invalid_argument("box side lengths must be positive");
  if (s.origin && static_cast<int>(s.origin->size()) != s.d) throw std::invalid_argument("origin must have d coordinates");
  if (s.samples < 1) throw std::invalid_argument("sample count must be at least 1");
  if (s.replicas < 1) throw std::invalid_argument("replica count must be at least 1");
  if (s.format != "csv" && s.format != "json") throw std::invalid_argument("format must be csv or json");
  if (s.method != "auto" && s.method != "exact" && s.method != "mc") throw std::invalid_argument("method must be auto, exact or mc");
}

inline ExperimentReport run_experiment(const ExperimentSpec& spec) {
  validate(spec);
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.spec = spec;
  experiments().at(spec.experiment)(spec, rep.rows);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace sandpile::harness
