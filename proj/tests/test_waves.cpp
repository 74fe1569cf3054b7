#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <json.hpp>

#include "sandpile/recurrence.hpp"
#include "sandpile/sampling.hpp"
#include "sandpile/waves.hpp"

#ifndef SANDPILE_FIXTURE_DIR
#define SANDPILE_FIXTURE_DIR "tests/fixtures"
#endif

namespace sandpile {
namespace {

std::vector<int> heights_of(const Configuration& c) { return {c.heights().begin(), c.heights().end()}; }

/// Origin component of the k-th wave tree, mapped back to site indices of the full volume.
std::vector<Site> tree_wave(const Configuration& eta, Site origin, int k) {
  Forest f = wave_tree(eta, origin, k);
  std::vector<Site> out{origin};
  for (Site s : origin_component(f)) out.push_back(eta.volume().index_of(f.volume().point(s)));
  std::sort(out.begin(), out.end());
  return out;
}

void check_invariants(const Configuration& eta, Site origin) {
  const auto wd = decompose_waves(eta, origin);
  const auto ref = add(eta, origin);
  ASSERT_EQ(wd.report.result, ref.result);
  ASSERT_EQ(wd.report.topple_count, ref.topple_count);
  ASSERT_EQ(wd.alpha, ref.topple_count[origin]);
  std::set<Site> uni;
  std::vector<std::int64_t> multiplicity(eta.size(), 0);
  for (const auto& w : wd.waves)
    for (Site s : w) {
      uni.insert(s);
      ++multiplicity[s];
    }
  ASSERT_EQ(std::vector<Site>(uni.begin(), uni.end()), ref.cluster);
  ASSERT_EQ(multiplicity, ref.topple_count);
  for (auto m : wd.max_topplings_per_wave) ASSERT_EQ(m, 1);
}

TEST(DecomposeWaves, NoWaveBelowThreshold) {
  auto v = make_box({3, 3});
  Configuration eta = Configuration::constant(v, 3);
  const auto wd = decompose_waves(eta, 4);
  EXPECT_EQ(wd.alpha, 0);
  EXPECT_TRUE(wd.waves.empty());
  auto expected = eta;
  ++expected[4];
  EXPECT_EQ(wd.report.result, expected);
}

TEST(DecomposeWaves, SingleSite) {
  const auto wd = decompose_waves({make_box({1, 1}), {4}}, 0);
  EXPECT_EQ(wd.alpha, 1);
  ASSERT_EQ(wd.waves.size(), 1u);
  EXPECT_EQ(wd.waves[0], (std::vector<Site>{0}));
}

TEST(DecomposeWaves, TwoByOne) {
  const Configuration eta{make_box({2, 1}), {4, 4}};
  const auto wd = decompose_waves(eta, 0);
  EXPECT_EQ(wd.alpha, 1);
  EXPECT_EQ(wd.waves[0], (std::vector<Site>{0, 1}));
  EXPECT_EQ(heights_of(wd.report.result), (std::vector<int>{2, 1}));
  EXPECT_EQ(tree_wave(eta, 0, 1), (std::vector<Site>{0, 1}));
}

TEST(DecomposeWaves, InvariantsOnRandomTriples) {
  for (int i = 0; i < 3000; ++i) {
    Rng rng = make_stream(404, i);
    const int d = (i % 3 == 0) ? 3 : 2;
    std::vector<int> sizes(d);
    for (auto& s : sizes) s = std::uniform_int_distribution<int>(1, d == 2 ? 9 : 5)(rng);
    auto v = make_box(sizes);
    // Arbitrary stable configurations, not only recurrent ones.
    std::vector<int> h(v->size());
    for (auto& x : h) x = std::uniform_int_distribution<int>(1, v->degree())(rng);
    const Site origin = std::uniform_int_distribution<Site>(0, static_cast<Site>(v->size()) - 1)(rng);
    check_invariants({v, h}, origin);
  }
}

TEST(WaveOperator, FirstWaveMatchesDecomposition) {
  auto v = make_box({6, 6});
  const Site origin = v->index_of(Point{2, 3});
  auto cut = v->punctured({2, 3});
  for (int i = 0; i < 500; ++i) {
    Rng rng = make_stream(505, i);
    Configuration eta = sample_recurrent(v, rng);
    eta[origin] = 4;
    const auto wd = decompose_waves(eta, origin);
    ASSERT_GE(wd.alpha, 1);
    Configuration xi = puncture(eta, origin, cut);
    for (int k = 0; k < wd.alpha; ++k) {
      xi = wave_operator(xi);
      ASSERT_EQ(xi, restrict_to(wd.intermediates[k], cut)) << "wave " << k + 1;
    }
  }
}

TEST(WaveOperator, PermutesPuncturedRecurrentSet) {
  auto cut = make_box({2, 2})->punctured({0, 0});
  const auto all = enumerate_recurrent(cut);
  ConfigCodec codec(*cut);
  std::set<std::uint64_t> domain, image;
  for (const auto& xi : all) {
    domain.insert(codec.encode(xi.heights()));
    Configuration out = wave_operator(xi);
    ASSERT_TRUE(burning_test(out).recurrent);
    image.insert(codec.encode(out.heights()));
  }
  EXPECT_EQ(domain, image);
}

TEST(WaveOperator, Errors) {
  EXPECT_THROW(wave_operator(Configuration::maximal(make_box({2, 2}))), std::invalid_argument);
  auto cut = make_box({2, 1})->punctured({0, 0});
  EXPECT_NO_THROW(wave_operator({cut, {1}}));  // single site with four sink edges is always recurrent
  auto cut3 = make_box({3, 1})->punctured({0, 0});
  EXPECT_THROW(wave_operator({cut3, {1, 1}}), std::invalid_argument);
}

TEST(WaveTree, VertexSetIsTheWave) {
  for (auto v : {make_box({6, 6}), make_cube(3, 4)}) {
    const Site origin = v->index_of(center_of(*v));
    for (int i = 0; i < 1000; ++i) {
      Rng rng = make_stream(606, i);
      Configuration eta = sample_recurrent(v, rng);
      eta[origin] = v->degree();
      const auto wd = decompose_waves(eta, origin);
      for (int k = 1; k <= wd.alpha; ++k) ASSERT_EQ(tree_wave(eta, origin, k), wd.waves[k - 1]);
    }
  }
}

TEST(WaveTree, Errors) {
  const Configuration eta{make_box({2, 1}), {4, 4}};
  EXPECT_THROW(wave_tree(eta, 0, 0), std::invalid_argument);
  EXPECT_THROW(wave_tree(eta, 0, 2), std::out_of_range);
  EXPECT_THROW(wave_tree({make_box({2, 1}), {1, 1}}, 0, 1), std::invalid_argument);
}

TEST(MultiWaveFixtures, Regression) {
  std::ifstream in(SANDPILE_FIXTURE_DIR "/multiwave.json");
  ASSERT_TRUE(in) << "missing fixture file";
  const auto doc = nlohmann::json::parse(in);
  ASSERT_GE(doc["instances"].size(), 4u);
  for (const auto& inst : doc["instances"]) {
    auto v = make_box(inst["sizes"].get<std::vector<int>>());
    const Configuration eta{v, inst["heights"].get<std::vector<int>>()};
    const Site origin = v->index_of(inst["origin"].get<Point>());
    ASSERT_TRUE(burning_test(eta).recurrent);
    const auto wd = decompose_waves(eta, origin);
    EXPECT_EQ(wd.alpha, inst["alpha"].get<int>());
    EXPECT_GE(wd.alpha, 2);
    EXPECT_EQ(wd.waves, inst["waves"].get<std::vector<std::vector<Site>>>());
    EXPECT_EQ(heights_of(wd.report.result), inst["result"].get<std::vector<int>>());
    for (int k = 1; k <= wd.alpha; ++k) EXPECT_EQ(tree_wave(eta, origin, k), wd.waves[k - 1]) << "wave " << k;
    check_invariants(eta, origin);
  }
}

TEST(DharFormula, MeanWaveCountIsGreenFunction) {
  for (auto v : {make_box({2, 2}), make_box({3, 2}), make_box({3, 3})}) {
    const auto all = enumerate_recurrent(v);
    const auto g = green_function_exact(*v);
    for (Site o = 0; o < static_cast<Site>(v->size()); ++o) {
      std::int64_t waves = 0;
      for (const auto& eta : all) waves += decompose_waves(eta, o).alpha;
      EXPECT_EQ(Rational(waves, static_cast<std::int64_t>(all.size())), g(o, o));
    }
  }
}

}  // namespace
}  // namespace sandpile
