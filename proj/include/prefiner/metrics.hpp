#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "prefiner/segment.hpp"

namespace prefiner {

/// |a ∩ b| / |a ∪ b| over clip indices; 0 when disjoint.
double temporal_iou(const Segment& a, const Segment& b);

struct RankConfig {
  std::vector<std::size_t> n_values{1, 5};
  std::vector<double> m_values{0.1, 0.3, 0.5};
};

struct RankedQuery {
  std::vector<Segment> ranked;  // best first
  Segment gt;
};

struct RankTable {
  std::vector<std::size_t> n_values;
  std::vector<double> m_values;
  std::vector<std::vector<double>> value;  // value[i][j] = Rank n_i @ m_j

  double at(std::size_t n, double m) const;
};

/// Fraction of queries with some top-n candidate at temporal IoU >= m.
/// Throws EmptyQuerySet; InvalidArgument for n = 0 or m outside (0, 1].
RankTable rank_n_at_m(const std::vector<RankedQuery>& queries, const RankConfig& cfg = {});

/// Row-major binary mask; nonzero means foreground.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w, 0) {}
  bool at(std::size_t y, std::size_t x) const { return pixels[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool on = true) { pixels[y * width + x] = on ? 1 : 0; }
  std::size_t count() const;
};

/// |pred ∧ gt| / |pred ∨ gt|, 1 when both are empty. Throws ShapeMismatch.
double region_similarity_j(const Mask& pred, const Mask& gt);

/// Foreground pixels with a background 4-neighbour or on the image border.
Mask boundary_pixels(const Mask& m);

/// Boundary F-measure with a Chebyshev-distance tolerance in pixels.
/// 1 when both boundaries are empty. Throws ShapeMismatch.
double boundary_f(const Mask& pred, const Mask& gt, std::size_t radius = 1);

struct JFScore {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
};

/// Per-frame J and F averaged over frames, J&F = (J + F) / 2.
/// Throws LengthMismatch.
JFScore j_and_f(const std::vector<Mask>& pred, const std::vector<Mask>& gt, std::size_t radius = 1);

}  // namespace prefiner
