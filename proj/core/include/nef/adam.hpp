#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nef/errors.hpp"
#include "nef/tensor.hpp"

namespace nef {

// Bias-corrected Adam over a fixed parameter list. Moments are kept in double
// regardless of the parameter precision; updates are deterministic, and a step
// with all-zero gradients leaves parameters bit-identical.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor<double>> m;
  std::vector<Tensor<double>> v;

  template <typename P>
  static AdamState like(const std::vector<P*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const P* p : params) {
      s.m.push_back(Tensor<double>::zeros(p->rows, p->cols));
      s.v.push_back(Tensor<double>::zeros(p->rows, p->cols));
    }
    return s;
  }
};

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, double lr) {
  if (!(lr >= 0.0)) throw ConfigError("adam_step: learning rate must be non-negative");
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& theta = *params[p];
    const Tensor<T>& g = grads[p];
    if (!theta.same_shape(g))
      throw DimensionError("adam_step: gradient shape " + g.shape_str() +
                           " does not match parameter " + theta.shape_str());
    Tensor<double>& m = state.m[p];
    Tensor<double>& v = state.v[p];
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      double gi = static_cast<double>(g.data[i]);
      if (!std::isfinite(gi))
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(p));
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      double step = lr * mhat / (std::sqrt(vhat) + state.eps);
      if (step != 0.0)
        theta.data[i] = static_cast<T>(static_cast<double>(theta.data[i]) - step);
    }
  }
}

}  // namespace nef
