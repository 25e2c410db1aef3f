#include "matchfree/mlp.hpp"

#include <cmath>

#include "matchfree/errors.hpp"

namespace matchfree {

MlpParams MlpParams::init(std::span<const std::size_t> dims, std::mt19937_64& rng) {
  if (dims.size() < 2) throw ValidationError("mlp needs at least input and output dims");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dims[l], 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Matrix(dims[l], dims[l + 1]), std::vector<double>(dims[l + 1])};
    for (double& w : layer.weight.values()) w = dist(rng);
    for (double& b : layer.bias) b = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams g;
  g.activation = activation;
  for (const auto& l : layers) {
    g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size())});
  }
  return g;
}

std::size_t MlpParams::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
std::size_t MlpParams::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("mlp has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].out_dim()) {
      throw ShapeError("mlp layer " + std::to_string(l) + ": bias size mismatch");
    }
    if (l + 1 < layers.size() && layers[l].out_dim() != layers[l + 1].in_dim()) {
      throw ShapeError("mlp layer " + std::to_string(l) + " output does not chain into layer " +
                       std::to_string(l + 1));
    }
  }
}

void MlpParams::fill(double v) {
  for (auto& l : layers) {
    l.weight.fill(v);
    for (double& b : l.bias) b = v;
  }
}

void MlpParams::append_tensors(const std::string& prefix, std::vector<TensorRef>& out) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    const std::string base = prefix + "." + std::to_string(l);
    out.push_back({base + ".weight", layer.weight.values(), layer.weight.rows(), layer.weight.cols()});
    out.push_back({base + ".bias", layer.bias, 1, layer.bias.size()});
  }
}

Matrix mlp_forward(const MlpParams& p, const Matrix& x, MlpCache* cache) {
  p.validate();
  if (x.cols() != p.in_dim()) {
    throw ShapeError("mlp_forward: input " + x.shape_str() + " but first layer expects " +
                     std::to_string(p.in_dim()) + " columns");
  }
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  Matrix h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    Matrix z = matmul(h, layer.weight);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
    }
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->preacts.push_back(z);
    }
    if (l + 1 < p.layers.size()) {
      for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
    }
    h = std::move(z);
  }
  return h;
}

Matrix mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& dy, MlpParams& grad) {
  if (cache.inputs.size() != p.layers.size() || cache.preacts.size() != p.layers.size()) {
    throw ShapeError("mlp_backward: cache does not belong to these parameters");
  }
  if (grad.layers.size() != p.layers.size()) {
    throw ShapeError("mlp_backward: gradient tape does not mirror parameters");
  }
  const Matrix& last = cache.preacts.back();
  if (!dy.same_shape(last)) {
    throw ShapeError("mlp_backward: dy " + dy.shape_str() + " vs output " + last.shape_str());
  }
  Matrix delta = dy;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    if (l + 1 < p.layers.size()) {
      const Matrix& z = cache.preacts[l];
      auto dv = delta.values();
      auto zv = z.values();
      for (std::size_t i = 0; i < dv.size(); ++i) {
        if (zv[i] <= 0.0) dv[i] = 0.0;
      }
    }
    auto& g = grad.layers[l];
    add_inplace(g.weight, matmul_at(cache.inputs[l], delta));
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      auto r = delta.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) g.bias[j] += r[j];
    }
    delta = matmul_bt(delta, p.layers[l].weight);
  }
  return delta;
}

}  // namespace matchfree
