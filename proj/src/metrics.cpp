#include "prefiner/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "prefiner/error.hpp"

namespace prefiner {

double temporal_iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  const std::size_t inter = hi > lo ? hi - lo : 0;
  const std::size_t uni = a.width() + b.width() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double RankTable::at(std::size_t n, double m) const {
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    for (std::size_t j = 0; j < m_values.size(); ++j) {
      if (n_values[i] == n && m_values[j] == m) return value[i][j];
    }
  }
  fail(ErrorCode::InvalidArgument, "rank table has no entry for n=" + std::to_string(n) + " m=" + std::to_string(m));
}

RankTable rank_n_at_m(const std::vector<RankedQuery>& queries, const RankConfig& cfg) {
  if (queries.empty()) fail(ErrorCode::EmptyQuerySet, "Rank n@m needs at least one query");
  for (std::size_t n : cfg.n_values) {
    if (n == 0) fail(ErrorCode::InvalidArgument, "Rank n@m: n must be >= 1");
  }
  for (double m : cfg.m_values) {
    if (!(m > 0.0 && m <= 1.0)) fail(ErrorCode::InvalidArgument, "Rank n@m: m must lie in (0, 1]");
  }
  RankTable t{cfg.n_values, cfg.m_values, {}};
  t.value.assign(cfg.n_values.size(), std::vector<double>(cfg.m_values.size(), 0.0));
  for (const auto& q : queries) {
    for (std::size_t i = 0; i < cfg.n_values.size(); ++i) {
      // best IoU among the top n
      double best = 0.0;
      const std::size_t top = std::min(cfg.n_values[i], q.ranked.size());
      for (std::size_t r = 0; r < top; ++r) best = std::max(best, temporal_iou(q.ranked[r], q.gt));
      for (std::size_t j = 0; j < cfg.m_values.size(); ++j) {
        if (best >= cfg.m_values[j]) t.value[i][j] += 1.0;
      }
    }
  }
  for (auto& row : t.value) {
    for (double& v : row) v /= static_cast<double>(queries.size());
  }
  return t;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](std::uint8_t p) { return p != 0; }));
}

namespace {

void same_shape(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) {
    fail(ErrorCode::ShapeMismatch, "masks differ in shape: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                       " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

// Fraction of `from` pixels that lie within `radius` of some `to` pixel.
double matched_fraction(const Mask& from, const Mask& to, std::size_t radius) {
  const std::size_t h = from.height, w = from.width;
  // Dilate `to` by a (2r+1)^2 square: rows first, then columns.
  std::vector<std::uint8_t> rows(h * w, 0), dil(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!to.at(y, x)) continue;
      const std::size_t lo = x >= radius ? x - radius : 0, hi = std::min(w - 1, x + radius);
      for (std::size_t xx = lo; xx <= hi; ++xx) rows[y * w + xx] = 1;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!rows[y * w + x]) continue;
      const std::size_t lo = y >= radius ? y - radius : 0, hi = std::min(h - 1, y + radius);
      for (std::size_t yy = lo; yy <= hi; ++yy) dil[yy * w + x] = 1;
    }
  }
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!from.pixels[i]) continue;
    ++total;
    hit += dil[i];
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

double region_similarity_j(const Mask& pred, const Mask& gt) {
  same_shape(pred, gt);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask boundary_pixels(const Mask& m) {
  Mask b(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == m.height || x + 1 == m.width;
      if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1)) b.set(y, x);
    }
  }
  return b;
}

double boundary_f(const Mask& pred, const Mask& gt, std::size_t radius) {
  same_shape(pred, gt);
  const Mask bp = boundary_pixels(pred);
  const Mask bg = boundary_pixels(gt);
  const bool pe = bp.count() == 0, ge = bg.count() == 0;
  if (pe && ge) return 1.0;
  if (pe || ge) return 0.0;
  const double precision = matched_fraction(bp, bg, radius);
  const double recall = matched_fraction(bg, bp, radius);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

JFScore j_and_f(const std::vector<Mask>& pred, const std::vector<Mask>& gt, std::size_t radius) {
  if (pred.size() != gt.size()) {
    fail(ErrorCode::LengthMismatch,
         "J&F: " + std::to_string(pred.size()) + " predicted frames vs " + std::to_string(gt.size()) + " ground-truth");
  }
  if (pred.empty()) fail(ErrorCode::LengthMismatch, "J&F needs at least one frame");
  JFScore s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s.j += region_similarity_j(pred[i], gt[i]);
    s.f += boundary_f(pred[i], gt[i], radius);
  }
  s.j /= static_cast<double>(pred.size());
  s.f /= static_cast<double>(pred.size());
  s.jf = (s.j + s.f) / 2.0;
  return s;
}

}  // namespace prefiner
