#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "matchfree/mlp.hpp"

namespace matchfree {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW-style) decay; 0 gives plain Adam.
  double weight_decay = 0.0;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

// One Adam update. `params` and `grads` are parallel lists of tensors. An
// empty state is lazily sized; otherwise its shapes must mirror `params`.
void adam_step(std::span<const TensorRef> params, std::span<const TensorRef> grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace matchfree
