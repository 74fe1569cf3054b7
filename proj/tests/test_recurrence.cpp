#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"
#include "sandpile/recurrence.hpp"
#include "sandpile/sampling.hpp"
#include "sandpile/stats.hpp"

namespace sandpile {
namespace {

TEST(BurningTest, SingleSiteAlwaysRecurrent) {
  auto one = make_box({1, 1});
  for (int k = 1; k <= 4; ++k) {
    auto r = burning_test({one, {k}});
    EXPECT_TRUE(r.recurrent);
    EXPECT_EQ(r.burn_time, (std::vector<int>{1}));
  }
}

TEST(BurningTest, TwoByOne) {
  auto two = make_box({2, 1});
  auto r = burning_test({two, {1, 1}});
  EXPECT_FALSE(r.recurrent);
  EXPECT_EQ(r.forbidden_witness, (std::vector<Site>{0, 1}));
  int recurrent = 0;
  for (int a = 1; a <= 4; ++a)
    for (int b = 1; b <= 4; ++b)
      if (burning_test({two, {a, b}}).recurrent) ++recurrent;
  EXPECT_EQ(recurrent, 15);
}

TEST(BurningTest, RejectsUnstable) { EXPECT_THROW(burning_test({make_box({2, 1}), {5, 1}}), std::invalid_argument); }

TEST(BurningTest, WitnessIsForbiddenAndScheduleIsValid) {
  Rng rng(8);
  auto v = make_box({4, 3});
  std::uniform_int_distribution<int> h(1, 4);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> eta(v->size());
    for (auto& x : eta) x = h(rng);
    Configuration c(v, eta);
    auto r = burning_test(c);
    if (!r.recurrent) {
      ASSERT_TRUE(is_forbidden(c, r.forbidden_witness));
      continue;
    }
    // Site burnt at t meets the threshold at t and not at t - 1.
    for (Site y = 0; y < static_cast<Site>(v->size()); ++y) {
      const int t = r.burn_time[y];
      int unburnt_before = 0, unburnt_two_before = 0;
      for (Site z : v->neighbors(y)) {
        if (z < 0) continue;
        if (r.burn_time[z] >= t) ++unburnt_before;
        if (r.burn_time[z] >= t - 1) ++unburnt_two_before;
      }
      ASSERT_GT(eta[y], unburnt_before);
      if (t > 1) ASSERT_LE(eta[y], unburnt_two_before);
    }
  }
}

TEST(BurningTest, AgreesWithSubsetOracle) {
  for (auto v : {make_box({2, 2}), make_box({3, 2}), make_volume(1, {0}, {5})}) {
    ConfigCodec codec(*v);
    std::vector<int> h(v->size());
    for (std::uint64_t code = 0; code < codec.state_count(); ++code) {
      codec.decode(code, h);
      ASSERT_EQ(burning_test({v, h}).recurrent, oracle::recurrent_by_subsets(*v, h));
    }
  }
}

TEST(Enumerate, Counts) {
  EXPECT_EQ(enumerate_recurrent(make_box({1, 1})).size(), 4u);
  EXPECT_EQ(enumerate_recurrent(make_box({2, 2})).size(), 192u);
  auto cube = make_cube(3, 2);
  EXPECT_EQ(Integer(enumerate_recurrent_codes(*cube).size()), recurrent_count_via_det(*cube));
}

TEST(Enumerate, LexicographicOrder) {
  auto all = enumerate_recurrent(make_box({2, 2}));
  for (std::size_t i = 1; i < all.size(); ++i)
    EXPECT_TRUE(std::lexicographical_compare(all[i - 1].heights().begin(), all[i - 1].heights().end(), all[i].heights().begin(),
                                             all[i].heights().end()));
}

TEST(Enumerate, CapExceeded) {
  EXPECT_THROW(enumerate_recurrent_codes(*make_box({5, 5})), std::length_error);
  EXPECT_THROW(enumerate_recurrent_codes(*make_box({2, 2}), 100), std::length_error);
}

TEST(Enumerate, RestrictionConsistency) {
  auto v = make_box({3, 3});
  auto subs = {make_volume(2, {0, 0}, {1, 1}), make_volume(2, {1, 0}, {2, 2}), make_volume(2, {1, 1}, {1, 1}),
               make_volume(2, {0, 2}, {2, 2})};
  for (const auto& eta : enumerate_recurrent(v))
    for (const auto& w : subs) ASSERT_TRUE(burning_test(restrict_to(eta, w)).recurrent);
}

TEST(Codec, RoundTrip) {
  auto v = make_cube(3, 2);
  ConfigCodec codec(*v);
  Rng rng(1);
  std::uniform_int_distribution<std::uint64_t> pick(0, codec.state_count() - 1);
  std::vector<int> h(v->size());
  for (int i = 0; i < 1000; ++i) {
    const auto c = pick(rng);
    codec.decode(c, h);
    ASSERT_EQ(codec.encode(h), c);
  }
}

std::vector<std::uint64_t> histogram(const VolumePtr& v, int draws, std::uint64_t seed) {
  const auto codes = enumerate_recurrent_codes(*v);
  ConfigCodec codec(*v);
  std::map<std::uint64_t, std::size_t> slot;
  for (std::size_t i = 0; i < codes.size(); ++i) slot[codes[i]] = i;
  std::vector<std::uint64_t> hits(codes.size(), 0);
  for (int i = 0; i < draws; ++i) {
    Rng rng = make_stream(seed, i);
    auto eta = sample_recurrent(v, rng);
    EXPECT_TRUE(burning_test(eta).recurrent);
    ++hits.at(slot.at(codec.encode(eta.heights())));
  }
  return hits;
}

TEST(SampleRecurrent, UniformOnSingleSite) {
  auto hits = histogram(make_box({1, 1}), 100'000, 17);
  EXPECT_EQ(hits.size(), 4u);
  EXPECT_GT(stats::chi_square_uniform(hits).p_value, 0.01);
}

TEST(SampleRecurrent, UniformOnTwoByOne) {
  auto hits = histogram(make_box({2, 1}), 100'000, 18);
  EXPECT_EQ(hits.size(), 15u);
  EXPECT_GT(stats::chi_square_uniform(hits).p_value, 0.01);
}

TEST(SampleRecurrent, PuncturedSamplesAreRecurrent) {
  auto cut = make_box({5, 5})->punctured({2, 2});
  Rng rng(3);
  for (int i = 0; i < 500; ++i) ASSERT_TRUE(burning_test(sample_recurrent_punctured(cut, rng)).recurrent);
}

}  // namespace
}  // namespace sandpile
