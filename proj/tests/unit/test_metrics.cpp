#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "helpers.hpp"
#include "prefiner/metrics.hpp"

using namespace prefiner;
using namespace testing_helpers;

namespace {

// Oracles written from the definitions, independently of the library.

double iou_by_sets(const Segment& a, const Segment& b) {
  std::set<std::size_t> sa, sb, un;
  for (std::size_t i = a.start; i < a.end; ++i) sa.insert(i), un.insert(i);
  for (std::size_t i = b.start; i < b.end; ++i) sb.insert(i), un.insert(i);
  std::size_t inter = 0;
  for (std::size_t i : sa) inter += sb.count(i);
  return un.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(un.size());
}

Mask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double p) {
  Mask m(h, w);
  std::bernoulli_distribution on(p);
  for (auto& px : m.pixels) px = on(rng) ? 1 : 0;
  return m;
}

bool is_boundary(const Mask& m, long y, long x) {
  if (!m.at(y, x)) return false;
  const long h = static_cast<long>(m.height), w = static_cast<long>(m.width);
  const long dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (int k = 0; k < 4; ++k) {
    const long yy = y + dy[k], xx = x + dx[k];
    if (yy < 0 || xx < 0 || yy >= h || xx >= w) return true;
    if (!m.at(yy, xx)) return true;
  }
  return false;
}

double f_oracle(const Mask& p, const Mask& g, long r) {
  std::vector<std::pair<long, long>> bp, bg;
  for (long y = 0; y < static_cast<long>(p.height); ++y)
    for (long x = 0; x < static_cast<long>(p.width); ++x) {
      if (is_boundary(p, y, x)) bp.emplace_back(y, x);
      if (is_boundary(g, y, x)) bg.emplace_back(y, x);
    }
  if (bp.empty() && bg.empty()) return 1.0;
  if (bp.empty() || bg.empty()) return 0.0;
  auto frac = [r](const auto& from, const auto& to) {
    std::size_t hit = 0;
    for (auto [y, x] : from) {
      for (auto [yy, xx] : to) {
        if (std::max(std::abs(y - yy), std::abs(x - xx)) <= r) {
          ++hit;
          break;
        }
      }
    }
    return static_cast<double>(hit) / static_cast<double>(from.size());
  };
  const double pr = frac(bp, bg), rc = frac(bg, bp);
  return pr + rc == 0.0 ? 0.0 : 2 * pr * rc / (pr + rc);
}

}  // namespace

TEST(Metrics, TemporalIouExamples) {
  EXPECT_DOUBLE_EQ(temporal_iou({0, 4}, {2, 6}), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(temporal_iou({0, 4}, {0, 4}), 1.0);
  EXPECT_DOUBLE_EQ(temporal_iou({0, 4}, {4, 8}), 0.0);
  EXPECT_DOUBLE_EQ(temporal_iou({0, 10}, {3, 5}), 0.2);
}

TEST(Metrics, TemporalIouMatchesSetOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> pos(0, 40);
  for (int i = 0; i < 1000; ++i) {
    std::size_t a0 = pos(rng), a1 = pos(rng), b0 = pos(rng), b1 = pos(rng);
    if (a0 == a1) ++a1;
    if (b0 == b1) ++b1;
    Segment a{std::min(a0, a1), std::max(a0, a1)}, b{std::min(b0, b1), std::max(b0, b1)};
    EXPECT_NEAR(temporal_iou(a, b), iou_by_sets(a, b), 1e-12);
    EXPECT_DOUBLE_EQ(temporal_iou(a, b), temporal_iou(b, a));
  }
}

TEST(Metrics, RankMatchesOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pos(0, 30);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RankedQuery> qs(20);
    for (auto& q : qs) {
      std::size_t g = pos(rng);
      q.gt = {g, g + 1 + pos(rng) % 8};
      for (int k = 0; k < 6; ++k) {
        std::size_t s = pos(rng);
        q.ranked.push_back({s, s + 1 + pos(rng) % 8});
      }
    }
    RankTable t = rank_n_at_m(qs);
    for (std::size_t i = 0; i < t.n_values.size(); ++i) {
      for (std::size_t j = 0; j < t.m_values.size(); ++j) {
        std::size_t hit = 0;
        for (const auto& q : qs) {
          bool ok = false;
          for (std::size_t k = 0; k < std::min(t.n_values[i], q.ranked.size()); ++k)
            ok = ok || iou_by_sets(q.ranked[k], q.gt) >= t.m_values[j];
          hit += ok;
        }
        EXPECT_DOUBLE_EQ(t.value[i][j], static_cast<double>(hit) / qs.size());
      }
    }
  }
}

TEST(Metrics, RankEdgeCases) {
  RankedQuery q{{{0, 4}}, {0, 4}};
  RankTable t = rank_n_at_m({q});
  EXPECT_DOUBLE_EQ(t.at(1, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(t.at(5, 0.1), 1.0);
  EXPECT_TRUE(throws_code([] { rank_n_at_m({}); }, ErrorCode::EmptyQuerySet));
  EXPECT_TRUE(throws_code([&] { rank_n_at_m({q}, RankConfig{{0}, {0.5}}); }, ErrorCode::InvalidArgument));
  EXPECT_TRUE(throws_code([&] { rank_n_at_m({q}, RankConfig{{1}, {1.5}}); }, ErrorCode::InvalidArgument));
  EXPECT_TRUE(throws_code([&] { t.at(3, 0.5); }, ErrorCode::InvalidArgument));
}

TEST(Metrics, RegionJMatchesOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    Mask p = random_mask(rng, 6, 7, 0.4), g = random_mask(rng, 6, 7, 0.4);
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < p.pixels.size(); ++k) {
      inter += p.pixels[k] && g.pixels[k];
      uni += p.pixels[k] || g.pixels[k];
    }
    const double want = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    EXPECT_NEAR(region_similarity_j(p, g), want, 1e-12);
  }
}

TEST(Metrics, BoundaryFMatchesOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double density = (i % 5) * 0.2 + 0.05;
    Mask p = random_mask(rng, 7, 8, density), g = random_mask(rng, 7, 8, density);
    const std::size_t r = i % 3;
    EXPECT_NEAR(boundary_f(p, g, r), f_oracle(p, g, static_cast<long>(r)), 1e-12) << i;
  }
}

TEST(Metrics, EmptyMasks) {
  Mask e(4, 4), full(4, 4);
  for (auto& px : full.pixels) px = 1;
  EXPECT_DOUBLE_EQ(region_similarity_j(e, e), 1.0);
  EXPECT_DOUBLE_EQ(boundary_f(e, e), 1.0);
  EXPECT_DOUBLE_EQ(region_similarity_j(e, full), 0.0);
  EXPECT_DOUBLE_EQ(boundary_f(e, full), 0.0);
  // Only the border ring of a full mask is boundary.
  EXPECT_EQ(boundary_pixels(full).count(), 12u);
}

TEST(Metrics, JAndFAverages) {
  Mask a(3, 3), b(3, 3);
  a.set(1, 1);
  std::vector<Mask> pred{a, a}, gt{a, b};
  JFScore s = j_and_f(pred, gt);
  EXPECT_DOUBLE_EQ(s.j, 0.5);
  EXPECT_DOUBLE_EQ(s.f, 0.5);
  EXPECT_DOUBLE_EQ(s.jf, 0.5);
  EXPECT_TRUE(throws_code([&] { j_and_f({a}, gt); }, ErrorCode::LengthMismatch));
  EXPECT_TRUE(throws_code([&] { j_and_f({}, {}); }, ErrorCode::LengthMismatch));
  EXPECT_TRUE(throws_code([&] { region_similarity_j(Mask(2, 2), Mask(2, 3)); }, ErrorCode::ShapeMismatch));
  EXPECT_TRUE(throws_code([&] { boundary_f(Mask(2, 2), Mask(3, 2)); }, ErrorCode::ShapeMismatch));
}

TEST(Metrics, RadiusTolerance) {
  Mask p(10, 10), g(10, 10);
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 2; x < 6; ++x) p.set(y, x), g.set(y + 1, x + 1);
  EXPECT_LT(boundary_f(p, g, 0), 1.0);
  EXPECT_DOUBLE_EQ(boundary_f(p, g, 1), 1.0);
}
