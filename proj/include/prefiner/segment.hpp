#pragma once

#include <cstddef>

namespace prefiner {

/// Half-open clip interval [start, end).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t width() const { return end - start; }
  bool valid_for(std::size_t t) const { return start < end && end <= t; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

}  // namespace prefiner
