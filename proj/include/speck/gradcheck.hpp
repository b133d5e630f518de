#pragma once

#include <cmath>
#include <functional>

#include "speck/nn.hpp"
#include "speck/tensor.hpp"

namespace speck {

// Central-difference gradient verification. The caller populates analytic
// gradients first (forward + backward at the unperturbed point); this then
// perturbs every element of every listed parameter and compares
// (f(x+eps) - f(x-eps)) / 2eps against the stored gradient.
//
// Relative error denominator is max(|numeric|, |analytic|, 1e-8). Returns the
// maximum relative error over all elements. Meant to be instantiated with
// S = double.
template <class S>
double grad_check(const ParamRefs<S>& params, const std::function<double()>& loss_fn,
                  double eps = 1e-4) {
  double worst = 0.0;
  for (auto* p : params) {
    for (int64_t j = 0; j < p->value.size(); ++j) {
      const S saved = p->value[j];
      p->value[j] = saved + static_cast<S>(eps);
      const double f_plus = loss_fn();
      p->value[j] = saved - static_cast<S>(eps);
      const double f_minus = loss_fn();
      p->value[j] = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double analytic = static_cast<double>(p->grad[j]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace speck
