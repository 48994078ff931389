#include "bag/predictor.hpp"

#include <cmath>
#include <stdexcept>

#include "bag/mathfn.hpp"

namespace bag::predictor {

void DecomposedHead::validate() const {
  f_c.validate();
  domain_classifier.validate();
  require(!experts.empty(), "head: need at least one expert");
  require(experts.size() == domain_embeddings.rows,
          "head: expert count must equal embedding count");
  require(domain_classifier.out_dim() == experts.size(),
          "head: domain classifier width must equal expert count");
  require(prior_logits.size() == n_classes(), "head: prior width must equal class count");
  for (const Mlp& ex : experts) {
    ex.validate();
    require(ex.out_dim() == n_classes(), "head: expert class width mismatch");
    require(ex.in_dim() == domain_classifier.in_dim() + domain_embeddings.cols,
            "head: expert input must be n_b + embed_dim");
  }
}

DecomposedHead make_head(std::size_t n_c, std::size_t n_b, std::size_t n_classes,
                         std::size_t n_experts, std::size_t embed_dim, Rng& rng) {
  DecomposedHead h;
  h.f_c = make_mlp({n_c, n_classes}, {Act::identity}, rng);
  h.prior_logits.assign(n_classes, 0.0);
  h.domain_embeddings = Matrix::gaussian(n_experts, embed_dim, rng, 0.5);
  // The bias path starts near zero: the invariant head then shapes the content
  // block first, and the experts pick up what remains in the bias block. A
  // symmetric start lets the higher-capacity mixture capture the content
  // signal instead, which defeats the decomposition.
  h.domain_classifier = make_mlp({n_b, n_experts}, {Act::identity}, rng, 0.01);
  for (std::size_t i = 0; i < n_experts; ++i)
    h.experts.push_back(make_mlp({n_b + embed_dim, n_classes}, {Act::identity}, rng, 0.01));
  h.validate();
  return h;
}

DecomposedHead zeros_like(const DecomposedHead& head) {
  DecomposedHead z;
  z.f_c = bag::zeros_like(head.f_c);
  z.prior_logits.assign(head.prior_logits.size(), 0.0);
  z.domain_embeddings = Matrix(head.domain_embeddings.rows, head.domain_embeddings.cols);
  z.domain_classifier = bag::zeros_like(head.domain_classifier);
  for (const Mlp& ex : head.experts) z.experts.push_back(bag::zeros_like(ex));
  return z;
}

namespace {

Matrix row_matrix(const std::vector<double>& v) {
  Matrix m(1, v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m(0, i) = v[i];
  return m;
}

std::vector<double> first_row(const Matrix& m) {
  return std::vector<double>(m.row(0), m.row(0) + m.cols);
}

// [B | e_i broadcast] as expert input.
Matrix expert_input(const Matrix& B, const Matrix& embeddings, std::size_t expert) {
  Matrix in(B.rows, B.cols + embeddings.cols);
  for (std::size_t r = 0; r < B.rows; ++r) {
    for (std::size_t j = 0; j < B.cols; ++j) in(r, j) = B(r, j);
    for (std::size_t j = 0; j < embeddings.cols; ++j)
      in(r, B.cols + j) = embeddings(expert, j);
  }
  return in;
}

}  // namespace

std::vector<double> invariant_logits(const DecomposedHead& head,
                                     const std::vector<double>& c) {
  return first_row(mlp_forward(head.f_c, row_matrix(c)));
}

std::vector<double> domain_posterior(const DecomposedHead& head,
                                     const std::vector<double>& b) {
  return first_row(softmax_rows(mlp_forward(head.domain_classifier, row_matrix(b))));
}

std::vector<double> expert_probs(const DecomposedHead& head, const std::vector<double>& b,
                                 std::size_t expert) {
  if (expert >= head.n_experts())
    throw std::out_of_range("expert_probs: expert index out of range");
  Matrix in = expert_input(row_matrix(b), head.domain_embeddings, expert);
  return first_row(softmax_rows(mlp_forward(head.experts[expert], in)));
}

std::vector<double> bias_mixture(const DecomposedHead& head, const std::vector<double>& b) {
  return first_row(bias_head_forward(head, row_matrix(b)));
}

double combine_binary(double bias_p1, double inv_logit1, double prior_logit1) {
  return sigmoid(logit(clip_prob(bias_p1)) + inv_logit1 - prior_logit1);
}

std::vector<double> combine_multiclass(const std::vector<double>& bias_probs,
                                       const std::vector<double>& inv_probs,
                                       const std::vector<double>& prior_probs) {
  const std::size_t k = bias_probs.size();
  require(inv_probs.size() == k && prior_probs.size() == k,
          "combine_multiclass: simplex sizes differ");
  std::vector<double> p(k);
  double norm = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double prior = std::max(prior_probs[i], kEpsClip);
    p[i] = bias_probs[i] * inv_probs[i] / prior;
    norm += p[i];
  }
  if (norm <= 0.0) throw std::runtime_error("combine_multiclass: zero normalizer");
  for (double& v : p) v /= norm;
  return p;
}

std::vector<double> kl_optimal_mixture(const std::vector<double>& domain_post,
                                       const std::vector<std::vector<double>>& per_env_cond) {
  require(domain_post.size() == per_env_cond.size(),
          "kl_optimal_mixture: weight/conditional count mismatch");
  require(!per_env_cond.empty(), "kl_optimal_mixture: empty input");
  const std::size_t k = per_env_cond.front().size();
  std::vector<double> q(k, 0.0);
  for (std::size_t e = 0; e < domain_post.size(); ++e) {
    require(per_env_cond[e].size() == k, "kl_optimal_mixture: conditional widths differ");
    for (std::size_t i = 0; i < k; ++i) q[i] += domain_post[e] * per_env_cond[e][i];
  }
  return q;
}

Matrix bias_head_forward(const DecomposedHead& head, const Matrix& B, BiasHeadCache* cache) {
  const std::size_t m = head.n_experts();
  const std::size_t k = head.n_classes();
  BiasHeadCache local;
  BiasHeadCache& c = cache ? *cache : local;

  c.dom_scores = mlp_forward(head.domain_classifier, B, &c.dom_cache);
  c.weights = softmax_rows(c.dom_scores);
  c.expert_caches.assign(m, MlpCache());
  c.expert_logits.resize(m);
  c.expert_probs.resize(m);
  c.mixture = Matrix(B.rows, k);
  for (std::size_t e = 0; e < m; ++e) {
    Matrix in = expert_input(B, head.domain_embeddings, e);
    c.expert_logits[e] = mlp_forward(head.experts[e], in, &c.expert_caches[e]);
    c.expert_probs[e] = softmax_rows(c.expert_logits[e]);
    for (std::size_t r = 0; r < B.rows; ++r)
      for (std::size_t j = 0; j < k; ++j)
        c.mixture(r, j) += c.weights(r, e) * c.expert_probs[e](r, j);
  }
  return c.mixture;
}

Matrix bias_head_backward(const DecomposedHead& head, const BiasHeadCache& cache,
                          const Matrix& dMixture, DecomposedHead& grad) {
  const std::size_t m = head.n_experts();
  const std::size_t n = dMixture.rows;
  const std::size_t k = head.n_classes();
  const std::size_t n_b = head.domain_classifier.in_dim();
  const std::size_t d_e = head.embed_dim();

  Matrix dB(n, n_b);
  Matrix dWeights(n, m);
  for (std::size_t e = 0; e < m; ++e) {
    // Mixture is linear in both the weights and the expert probabilities.
    Matrix dProbs(n, k);
    for (std::size_t r = 0; r < n; ++r) {
      double wsum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        dProbs(r, j) = cache.weights(r, e) * dMixture(r, j);
        wsum += cache.expert_probs[e](r, j) * dMixture(r, j);
      }
      dWeights(r, e) = wsum;
    }
    Matrix dLogits = softmax_backward_rows(cache.expert_probs[e], dProbs);
    Matrix dIn = mlp_backward(head.experts[e], cache.expert_caches[e], dLogits,
                              grad.experts[e]);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < n_b; ++j) dB(r, j) += dIn(r, j);
      for (std::size_t j = 0; j < d_e; ++j)
        grad.domain_embeddings(e, j) += dIn(r, n_b + j);
    }
  }
  Matrix dScores = softmax_backward_rows(cache.weights, dWeights);
  Matrix dBdom = mlp_backward(head.domain_classifier, cache.dom_cache, dScores,
                              grad.domain_classifier);
  for (std::size_t i = 0; i < dB.size(); ++i) dB.data[i] += dBdom.data[i];
  return dB;
}

}  // namespace bag::predictor
