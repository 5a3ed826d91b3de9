#pragma once

#include <cmath>

#include "blanket/tensor.hpp"

namespace blanket {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment state for one parameter tensor.
struct AdamState {
  Tensor m;
  Tensor v;
  long t = 0;

  void init_like(const Tensor& p) {
    m = Tensor(p.shape, 0.0);
    v = Tensor(p.shape, 0.0);
    t = 0;
  }
};

inline void adam_step(Tensor& param, const Tensor& grad, AdamState& st, const AdamConfig& cfg) {
  if (!param.same_shape(grad)) throw type_error("adam_step: shape mismatch");
  if (st.m.shape != param.shape) st.init_like(param);
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace blanket
