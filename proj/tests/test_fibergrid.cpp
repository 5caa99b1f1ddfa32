#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <sstream>

#include "qrchain/fibergrid.hpp"

using namespace qrchain;

namespace {

FiberPath bonn_berlin() {
  return load_fiber_path_file(std::string(QRCHAIN_DATA_DIR) + "/bonn_berlin_grid.csv");
}

FiberPath uniform_path(int segments, double len = 10.0) {
  std::vector<FiberSegment> segs;
  for (int i = 0; i < segments; ++i) {
    segs.push_back({"s" + std::to_string(i), "s" + std::to_string(i + 1), len, 0.2 * len});
  }
  return FiberPath(segs);
}

// Counts r-subsets of sites 1..S with pairwise gaps >= 2 and no repeater on site 1 or S.
std::size_t brute_force_count(int sites, int r) {
  std::size_t count = 0;
  for (std::uint32_t mask = 0; mask < (1u << sites); ++mask) {
    if (std::popcount(mask) != r) continue;
    std::vector<int> chosen;
    for (int s = 1; s <= sites; ++s) {
      if (mask & (1u << (s - 1))) chosen.push_back(s);
    }
    bool ok = true;
    int prev = 0;
    for (int s : chosen) {
      if (s - prev < 2) ok = false;
      prev = s;
    }
    if (sites + 1 - prev < 2) ok = false;
    count += ok;
  }
  return count;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  return std::round(std::exp(std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1)));
}

}  // namespace

TEST(FiberGrid, BonnBerlinTotals) {
  const auto path = bonn_berlin();
  EXPECT_EQ(path.num_segments(), 17u);
  EXPECT_EQ(path.num_sites(), 16u);
  EXPECT_NEAR(path.total_length(), 917.1, 1e-9);
  EXPECT_NEAR(path.total_attenuation(), 214.7, 1e-9);
  EXPECT_EQ(path.site_name(0), "Bonn");
  EXPECT_EQ(path.site_name(17), "Berlin");
  EXPECT_EQ(path.site_name(3), "Wuppertal");
}

TEST(FiberGrid, PlacementCountsMatchBinomials) {
  const auto table = enumerate_placements(bonn_berlin(), 7);
  const std::size_t expected[] = {0, 14, 78, 220, 330, 252, 84, 8};
  for (int r = 1; r <= 7; ++r) {
    EXPECT_EQ(table.count(r), expected[r]);
    EXPECT_EQ(static_cast<double>(table.count(r)), binomial(16 - 1 - r, r));
  }
  EXPECT_EQ(table.total(), 986u);
  EXPECT_FALSE(table.truncated);
}

TEST(FiberGrid, PlacementCountsMatchBruteForce) {
  for (int segs = 2; segs <= 14; ++segs) {
    const auto path = uniform_path(segs);
    const int sites = segs - 1;
    const auto table = enumerate_placements(path, 10);
    for (int r = 1; r <= 10; ++r) {
      EXPECT_EQ(table.count(r), brute_force_count(sites, r)) << "segments=" << segs << " r=" << r;
    }
  }
}

TEST(FiberGrid, EveryLinkSpansAtLeastTwoSegments) {
  const auto path = bonn_berlin();
  const auto table = enumerate_placements(path, 7);
  for (int r = 1; r <= 7; ++r) {
    for (const auto& c : table.by_repeaters[r]) {
      ASSERT_EQ(c.links.size(), static_cast<std::size_t>(r + 1));
      double total = 0.0;
      for (const auto& l : c.links) total += l.length_km;
      EXPECT_NEAR(total, path.total_length(), 1e-9);
      int prev = 0;
      for (int s : c.repeater_sites) {
        EXPECT_GE(s - prev, 2);
        prev = s;
      }
      EXPECT_GE(17 - prev, 2);
    }
  }
}

TEST(FiberGrid, GroupsSortedByAsymmetry) {
  const auto table = enumerate_placements(bonn_berlin(), 7);
  for (const auto& g : table.by_repeaters) {
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LE(g[i - 1].asymmetry, g[i].asymmetry);
  }
}

TEST(FiberGrid, TruncatedWhenAskingTooMuch) {
  const auto table = enumerate_placements(bonn_berlin(), 12);
  EXPECT_TRUE(table.truncated);
  EXPECT_EQ(table.max_repeaters(), 7);
  EXPECT_EQ(table.total(), 986u);
}

TEST(FiberGrid, MaxRepeatersOneGivesFourteen) {
  EXPECT_EQ(enumerate_placements(bonn_berlin(), 1).total(), 14u);
}

TEST(FiberGrid, ReferencePlacementLinksMatchTable) {
  const auto c = make_configuration(bonn_berlin(), {3, 5, 7, 9, 11, 13, 15});
  const double lengths[] = {138.9, 133.2, 126.2, 97.2, 122.0, 115.5, 103.9, 80.2};
  const double atten[] = {32.8, 31.4, 29.6, 22.7, 28.4, 26.9, 24.3, 18.6};
  ASSERT_EQ(c.links.size(), 8u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_NEAR(c.links[i].length_km, lengths[i], 1e-9);
    EXPECT_NEAR(c.links[i].attenuation_db, atten[i], 1e-9);
  }
}

TEST(FiberGrid, AsymmetryFormula) {
  EXPECT_DOUBLE_EQ(chain_asymmetry({{100, 20}, {100, 20}}), 0.0);
  EXPECT_NEAR(chain_asymmetry({{100, 20}, {50, 10}}), 50.0 / 150.0, 1e-15);
  EXPECT_NEAR(chain_asymmetry({{100, 20}, {50, 10}, {50, 10}}), 0.5 * (50.0 / 150.0 + 0.0), 1e-15);
  EXPECT_THROW(chain_asymmetry(std::vector<ElementaryLink>{{100, 20}}), std::invalid_argument);
}

TEST(FiberGrid, RankRounding) {
  EXPECT_EQ(placement_rank(8, 0.0), 0u);
  EXPECT_EQ(placement_rank(8, 1.0), 7u);
  EXPECT_EQ(placement_rank(8, 0.5), 4u);  // 3.5 rounds away from zero
  EXPECT_EQ(placement_rank(1, 0.7), 0u);
  EXPECT_THROW(placement_rank(8, 1.5), std::invalid_argument);
  EXPECT_THROW(placement_rank(0, 0.5), std::invalid_argument);
}

TEST(FiberGrid, SelectConfiguration) {
  const auto table = enumerate_placements(bonn_berlin(), 7);
  EXPECT_EQ(select_configuration(table, 7, 0.0).asymmetry, table.by_repeaters[7].front().asymmetry);
  EXPECT_EQ(select_configuration(table, 7, 1.0).asymmetry, table.by_repeaters[7].back().asymmetry);
  EXPECT_THROW(select_configuration(table, 8, 0.0), std::invalid_argument);
  EXPECT_THROW(select_configuration(table, 0, 0.0), std::invalid_argument);
}

TEST(FiberGrid, SymmetrizedPathHasOnePlacementWithZeroAsymmetry) {
  const auto path = symmetrized_path(917.1, 214.7, 7);
  EXPECT_EQ(path.num_segments(), 16u);
  const auto table = enumerate_placements(path, 7);
  ASSERT_EQ(table.count(7), 1u);
  EXPECT_NEAR(table.by_repeaters[7][0].asymmetry, 0.0, 1e-12);
  for (const auto& l : table.by_repeaters[7][0].links) EXPECT_NEAR(l.length_km, 917.1 / 8, 1e-9);
}

TEST(FiberGrid, DirectConfiguration) {
  const auto c = direct_configuration(bonn_berlin());
  ASSERT_EQ(c.links.size(), 1u);
  EXPECT_EQ(c.num_repeaters(), 0);
  EXPECT_NEAR(c.links[0].attenuation_db, 214.7, 1e-9);
}

TEST(FiberGrid, MakeConfigurationRejectsCrowdedSites) {
  const auto path = bonn_berlin();
  EXPECT_THROW(make_configuration(path, {1}), std::invalid_argument);
  EXPECT_THROW(make_configuration(path, {3, 4}), std::invalid_argument);
  EXPECT_THROW(make_configuration(path, {16}), std::invalid_argument);
  EXPECT_THROW(make_configuration(path, {17}), std::invalid_argument);
}

TEST(FiberGrid, LoaderValidation) {
  std::istringstream ok("# comment\nA,B,10,2\nB,C,20\n");
  const auto p = load_fiber_path(ok);
  EXPECT_NEAR(p.total_attenuation(), 2.0 + 20.0 * kDefaultAttenuationPerKm, 1e-12);

  std::istringstream zero("A,B,0,0\n");
  EXPECT_THROW(load_fiber_path(zero), std::invalid_argument);
  std::istringstream band("A,B,10,8\n");
  EXPECT_THROW(load_fiber_path(band), std::invalid_argument);
  std::istringstream band_off("A,B,10,8\n");
  EXPECT_NO_THROW(load_fiber_path(band_off, false));
  std::istringstream broken("A,B,10,2\nX,C,10,2\n");
  EXPECT_THROW(load_fiber_path(broken), std::invalid_argument);
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(load_fiber_path(empty), std::invalid_argument);
  std::istringstream junk("A,B,ten,2\n");
  EXPECT_THROW(load_fiber_path(junk), std::invalid_argument);
  EXPECT_THROW(load_fiber_path_file("/nonexistent/path.csv"), std::runtime_error);
}

TEST(FiberGrid, SurvivalProbabilityOfTwoAverageSegments) {
  const auto path = bonn_berlin();
  EXPECT_NEAR(baseline_survival_prob(path), std::pow(10.0, -(2.0 / 17.0) * 214.7 / 10.0), 1e-15);
}
