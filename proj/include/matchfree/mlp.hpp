#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "matchfree/matrix.hpp"

namespace matchfree {

// Named view over one parameter (or gradient) buffer. Used by the optimizer,
// the gradient checker and checkpoint serialization.
struct TensorRef {
  std::string name;
  std::span<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

enum class Activation { kRelu };

struct DenseLayer {
  Matrix weight;  // in x out
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

// Stack of affine layers with the activation applied between layers (not
// after the last one).
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kRelu;

  // dims = {in, hidden..., out}. Weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static MlpParams init(std::span<const std::size_t> dims, std::mt19937_64& rng);
  MlpParams zeros_like() const;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  // Throws ShapeError unless adjacent layer dims chain and bias sizes match.
  void validate() const;
  void fill(double v);

  void append_tensors(const std::string& prefix, std::vector<TensorRef>& out);
};

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> preacts; // pre-activation output of each layer
};

Matrix mlp_forward(const MlpParams& p, const Matrix& x, MlpCache* cache = nullptr);

// Accumulates parameter gradients into `grad` (same structure as `p`) and
// returns the gradient with respect to the input.
Matrix mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& dy,
                    MlpParams& grad);

}  // namespace matchfree
