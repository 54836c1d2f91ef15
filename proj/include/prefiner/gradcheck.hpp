#pragma once

#include <functional>
#include <vector>

#include "prefiner/tensor.hpp"

namespace prefiner {

/// Compares tape gradients of the scalar `f` against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2eps for every coordinate of every
/// tensor in `params`. Returns max |a - b| / max(1, |a|, |b|).
///
/// `f` must rebuild its result from the current values of `params` each time
/// it is called. The params' gradients are overwritten.
double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double eps = 1e-5);

/// Single-input form: f(x).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace prefiner
