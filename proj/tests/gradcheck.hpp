#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ssda2/autograd.hpp"

namespace ssda2::testing {

struct GradCheckResult {
  std::int64_t checked = 0;
  std::int64_t failed = 0;
  double worst_rel = 0;
  bool ok(double allowed_fail_fraction = 0.0) const {
    return checked > 0 &&
           static_cast<double>(failed) <= allowed_fail_fraction * static_cast<double>(checked);
  }
};

/// Central finite differences vs analytic gradients for a scalar function of
/// leaf tensors. `f` must rebuild the graph from the leaves on every call.
inline GradCheckResult gradcheck(const std::function<Var(const std::vector<Var>&)>& f,
                                 std::vector<Var> leaves, double step = 1e-4,
                                 double rel_tol = 1e-3) {
  for (auto& l : leaves) l->grad = Tensor();
  Var root = f(leaves);
  backward(root);

  GradCheckResult r;
  for (auto& leaf : leaves) {
    if (!leaf->requires_grad) continue;
    Tensor analytic = leaf->has_grad() ? leaf->grad : Tensor::zeros(leaf->value.shape());
    for (std::int64_t i = 0; i < leaf->value.size(); ++i) {
      const double orig = leaf->value[i];
      leaf->value[i] = orig + step;
      const double fp = f(leaves)->value.item();
      leaf->value[i] = orig - step;
      const double fm = f(leaves)->value.item();
      leaf->value[i] = orig;
      const double fd = (fp - fm) / (2 * step);
      const double a = analytic[i];
      // Absolute floor keeps FD roundoff noise on truly-zero gradients from
      // registering as relative failures.
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
      const double rel = std::abs(a - fd) / denom;
      ++r.checked;
      if (rel > r.worst_rel) r.worst_rel = rel;
      if (rel > rel_tol) ++r.failed;
    }
  }
  return r;
}

}  // namespace ssda2::testing
