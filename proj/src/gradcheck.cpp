#include "prefiner/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace prefiner {

double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double eps) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }

  TapeScope off(nullptr);
  double worst = 0.0;
  for (auto& p : params) {
    auto x = p.mutable_data();
    auto g = p.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double up = f().item();
      x[i] = saved - eps;
      const double down = f().item();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(numeric - g[i]) / std::max({1.0, std::abs(numeric), std::abs(g[i])});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  return finite_diff_check([&] { return f(x); }, {x}, eps);
}

}  // namespace prefiner
