#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "speck/error.hpp"
#include "speck/nn.hpp"
#include "speck/tensor.hpp"

namespace speck {

// Adam with bias correction. Moments are kept per parameter, aligned by index
// with the parameter list the state was built from. lr_scale lets one
// optimizer drive parameter groups at different rates (finetuning runs the
// upstream slower than the head).
template <class S>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step_count = 0;
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
  std::vector<double> lr_scale;

  static AdamState init(const ParamRefs<S>& params, double lr) {
    AdamState st;
    st.lr = lr;
    for (auto* p : params) {
      st.m.push_back(Tensor<S>::zeros(p->value.shape));
      st.v.push_back(Tensor<S>::zeros(p->value.shape));
      st.lr_scale.push_back(1.0);
    }
    return st;
  }
};

template <class S>
void adam_step(const ParamRefs<S>& params, AdamState<S>& state) {
  if (params.size() != state.m.size())
    throw ShapeError("adam_step: state does not match parameter list");
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  for (size_t i = 0; i < params.size(); ++i) {
    Parameter<S>& p = *params[i];
    Tensor<S>& m = state.m[i];
    Tensor<S>& v = state.v[i];
    const double lr = state.lr * state.lr_scale[i];
    for (int64_t j = 0; j < p.value.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]);
      const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<S>(mj);
      v[j] = static_cast<S>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p.value[j] = static_cast<S>(static_cast<double>(p.value[j]) -
                                  lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

// Global L2 gradient-norm clipping; a max_norm <= 0 disables it.
template <class S>
double clip_grad_norm(const ParamRefs<S>& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    for (int64_t j = 0; j < p->grad.size(); ++j) {
      const double g = static_cast<double>(p->grad[j]);
      sq += g * g;
    }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* p : params)
      for (int64_t j = 0; j < p->grad.size(); ++j)
        p->grad[j] = static_cast<S>(static_cast<double>(p->grad[j]) * scale);
  }
  return norm;
}

}  // namespace speck
