#pragma once

#include <functional>
#include <random>

#include "prefiner/error.hpp"
#include "prefiner/tensor.hpp"

namespace testing_helpers {

inline prefiner::Tensor random_tensor(prefiner::Shape shape, std::uint64_t seed, bool grad = false, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  std::vector<double> v(prefiner::shape_size(shape));
  for (auto& x : v) x = n(rng);
  return prefiner::Tensor::from(std::move(shape), std::move(v), grad);
}

inline prefiner::ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const prefiner::Error& e) {
    return e.code();
  }
  return prefiner::ErrorCode::InvalidArgument;  // sentinel; callers never expect it from a non-throwing call
}

inline bool throws_code(const std::function<void()>& f, prefiner::ErrorCode want) {
  try {
    f();
  } catch (const prefiner::Error& e) {
    return e.code() == want;
  }
  return false;
}

inline double max_abs_diff(const prefiner::Tensor& a, const prefiner::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace testing_helpers
