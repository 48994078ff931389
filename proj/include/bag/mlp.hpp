#pragma once

#include <string>
#include <vector>

#include "bag/matrix.hpp"
#include "bag/rng.hpp"

namespace bag {

enum class Act { identity, relu, tanh, sigmoid, softmax };

std::string act_name(Act a);
Act act_from_name(const std::string& name);

struct Layer {
  Matrix W;               // out x in
  std::vector<double> b;  // out
  Act act = Act::identity;
};

// Fixed-architecture multilayer perceptron with hand-derived backward.
// Softmax is only legal as the final activation.
struct Mlp {
  std::vector<Layer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().W.cols; }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().W.rows; }
  void validate() const;
};

// Per-layer activations retained for backward.
struct MlpCache {
  Matrix input;                   // batch fed to the first layer
  std::vector<Matrix> post;       // post-activation output of each layer
  std::vector<Matrix> pre_relu;   // pre-activations, kept only for relu layers
};

Mlp make_mlp(const std::vector<std::size_t>& dims, const std::vector<Act>& acts,
             Rng& rng, double init_scale = 0.0);

Mlp zeros_like(const Mlp& m);

Matrix mlp_forward(const Mlp& m, const Matrix& X, MlpCache* cache = nullptr);

// Accumulates parameter gradients into `grad` (same architecture, typically
// from zeros_like) and returns the gradient w.r.t. X.
Matrix mlp_backward(const Mlp& m, const MlpCache& cache, const Matrix& dY, Mlp& grad);

// Softmax over each row; rows sum to 1 within 1e-12.
Matrix softmax_rows(const Matrix& logits);

// dL/dlogits given dL/dprobs, with probs = softmax_rows(logits).
Matrix softmax_backward_rows(const Matrix& probs, const Matrix& dProbs);

}  // namespace bag
