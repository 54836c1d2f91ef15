#pragma once

#include <cstddef>
#include <vector>

#include "prefiner/tensor.hpp"

namespace prefiner {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t steps = 0;
};

/// One decoupled-weight-decay Adam update, in place. Throws MissingGrad if a
/// parameter has no gradient buffer.
void adamw_step(std::vector<Tensor>& params, AdamWState& state, const AdamWConfig& cfg);

void zero_grads(std::vector<Tensor>& params);

}  // namespace prefiner
