#include "matchfree/optim.hpp"

#include <cmath>

#include "matchfree/errors.hpp"

namespace matchfree {

void adam_step(std::span<const TensorRef> params, std::span<const TensorRef> grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads count mismatch");
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.data.size(), 0.0);
      state.v.emplace_back(p.data.size(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state does not mirror params");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t].data.size() != params[t].data.size() || state.m[t].size() != params[t].data.size() ||
        state.v[t].size() != params[t].data.size()) {
      throw ShapeError("adam_step: shape mismatch on tensor " + params[t].name);
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t].data;
    auto g = grads[t].data;
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      if (cfg.weight_decay != 0.0) p[i] -= cfg.lr * cfg.weight_decay * p[i];
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace matchfree
