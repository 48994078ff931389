#pragma once

#include <vector>

#include "bag/matrix.hpp"
#include "bag/mlp.hpp"
#include "bag/rng.hpp"

namespace bag::predictor {

// Decomposed classifier: invariant head, learnable label-prior logits, and a
// bias-aware mixture of per-domain experts routed by a domain classifier over
// learnable domain embeddings.
struct DecomposedHead {
  Mlp f_c;                           // n_c -> K logits
  std::vector<double> prior_logits;  // K
  Matrix domain_embeddings;          // M x d_e
  Mlp domain_classifier;             // n_b -> M raw scores
  std::vector<Mlp> experts;          // each (n_b + d_e) -> K logits

  std::size_t n_classes() const { return f_c.out_dim(); }
  std::size_t n_experts() const { return experts.size(); }
  std::size_t embed_dim() const { return domain_embeddings.cols; }
  void validate() const;
};

DecomposedHead make_head(std::size_t n_c, std::size_t n_b, std::size_t n_classes,
                         std::size_t n_experts, std::size_t embed_dim, Rng& rng);

// Per-sample view of every stage of the decomposed prediction.
struct PredictionBundle {
  std::vector<double> inv_logits;      // K
  std::vector<double> bias_probs;      // K-simplex
  std::vector<double> domain_weights;  // M-simplex
  std::vector<double> combined_probs;  // K-simplex
};

std::vector<double> invariant_logits(const DecomposedHead& head,
                                     const std::vector<double>& c);

std::vector<double> domain_posterior(const DecomposedHead& head,
                                     const std::vector<double>& b);

std::vector<double> expert_probs(const DecomposedHead& head, const std::vector<double>& b,
                                 std::size_t expert);

std::vector<double> bias_mixture(const DecomposedHead& head, const std::vector<double>& b);

// p(y=1 | c, b) = sigma(logit(p(y=1|b)) + logit(p(y=1|c)) - logit(p(y=1))).
double combine_binary(double bias_p1, double inv_logit1, double prior_logit1);

// P_k = bias_k * inv_k / prior_k, normalized to the simplex.
std::vector<double> combine_multiclass(const std::vector<double>& bias_probs,
                                       const std::vector<double>& inv_probs,
                                       const std::vector<double>& prior_probs);

// KL-optimal aggregate of per-environment conditionals under the domain
// posterior: q*(y|b) = sum_e p(e|b) p(y|b,e).
std::vector<double> kl_optimal_mixture(const std::vector<double>& domain_post,
                                       const std::vector<std::vector<double>>& per_env_cond);

// Batch forward of the bias-aware head, with cache for backward.
struct BiasHeadCache {
  MlpCache dom_cache;
  Matrix dom_scores;                   // n x M raw
  Matrix weights;                      // n x M softmax
  std::vector<MlpCache> expert_caches;
  std::vector<Matrix> expert_logits;   // per expert, n x K
  std::vector<Matrix> expert_probs;    // per expert, n x K
  Matrix mixture;                      // n x K
};

Matrix bias_head_forward(const DecomposedHead& head, const Matrix& B,
                         BiasHeadCache* cache = nullptr);

// Accumulates gradients into `grad` (same architecture); returns dL/dB.
Matrix bias_head_backward(const DecomposedHead& head, const BiasHeadCache& cache,
                          const Matrix& dMixture, DecomposedHead& grad);

DecomposedHead zeros_like(const DecomposedHead& head);

}  // namespace bag::predictor
