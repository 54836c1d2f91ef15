#include "prefiner/optim.hpp"

#include <cmath>

#include "prefiner/error.hpp"

namespace prefiner {

void adamw_step(std::vector<Tensor>& params, AdamWState& state, const AdamWConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) fail(ErrorCode::InvalidArgument, "optimizer state built for other parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) fail(ErrorCode::MissingGrad, "parameter " + std::to_string(i) + " has no gradient");
  }
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      w[j] -= cfg.lr * cfg.weight_decay * w[j];
      w[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace prefiner
