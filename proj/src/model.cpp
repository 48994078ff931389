#include "bag/model.hpp"

#include <cmath>
#include <stdexcept>

#include <openssl/evp.h>

#include "bag/mathfn.hpp"

namespace bag {

void BagModel::validate() const {
  vae.validate();
  head.validate();
  require(head.f_c.in_dim() == vae.n_c, "BagModel: f_c input must be n_c");
  require(head.domain_classifier.in_dim() == vae.n_b,
          "BagModel: domain classifier input must be n_b");
}

BagModel make_bag_model(std::size_t n_x, std::size_t n_c, std::size_t n_b,
                        std::size_t n_classes, std::size_t n_experts,
                        std::size_t embed_dim, std::size_t decoder_hidden, double beta,
                        Rng& rng) {
  BagModel m;
  m.vae = disentangle::make_vae(n_x, n_c, n_b, decoder_hidden, beta, rng);
  m.head = predictor::make_head(n_c, n_b, n_classes, n_experts, embed_dim, rng);
  m.validate();
  return m;
}

BagModel zeros_like(const BagModel& m) {
  BagModel z;
  z.vae.encoder = zeros_like(m.vae.encoder);
  z.vae.decoder = zeros_like(m.vae.decoder);
  z.vae.beta = m.vae.beta;
  z.vae.n_c = m.vae.n_c;
  z.vae.n_b = m.vae.n_b;
  z.head = predictor::zeros_like(m.head);
  return z;
}

std::vector<ParamView> bias_head_param_views(BagModel& m) {
  std::vector<ParamView> views;
  auto add = [&views](std::vector<ParamView> v) {
    for (ParamView& p : v) views.push_back(std::move(p));
  };
  add(param_views(m.head.domain_classifier, "head.domain_classifier"));
  views.push_back({"head.domain_embeddings", std::span<double>(m.head.domain_embeddings.data)});
  for (std::size_t i = 0; i < m.head.experts.size(); ++i)
    add(param_views(m.head.experts[i], "head.expert" + std::to_string(i)));
  return views;
}

std::vector<ParamView> frozen_param_views(BagModel& m) {
  std::vector<ParamView> views;
  auto add = [&views](std::vector<ParamView> v) {
    for (ParamView& p : v) views.push_back(std::move(p));
  };
  add(param_views(m.vae.encoder, "vae.encoder"));
  add(param_views(m.vae.decoder, "vae.decoder"));
  add(param_views(m.head.f_c, "head.f_c"));
  views.push_back({"head.prior_logits", std::span<double>(m.head.prior_logits)});
  return views;
}

std::vector<ParamView> param_views(BagModel& m) {
  std::vector<ParamView> views = frozen_param_views(m);
  for (ParamView& p : bias_head_param_views(m)) views.push_back(std::move(p));
  return views;
}

Matrix combine_rows(const Matrix& mixture, const Matrix& inv_logits,
                    const std::vector<double>& prior_logits) {
  require(mixture.rows == inv_logits.rows, "combine_rows: batch mismatch");
  const std::size_t k = prior_logits.size();
  require(mixture.cols == k && inv_logits.cols == k, "combine_rows: class width mismatch");

  Matrix prior(1, k);
  for (std::size_t j = 0; j < k; ++j) prior(0, j) = prior_logits[j];
  const Matrix prior_p = softmax_rows(prior);

  Matrix out(mixture.rows, k);
  std::vector<double> bias(k), inv(k), pri(prior_p.row(0), prior_p.row(0) + k);
  for (std::size_t i = 0; i < mixture.rows; ++i) {
    Matrix row(1, k);
    for (std::size_t j = 0; j < k; ++j) row(0, j) = inv_logits(i, j);
    const Matrix inv_p = softmax_rows(row);
    for (std::size_t j = 0; j < k; ++j) {
      bias[j] = clip_prob(mixture(i, j));
      inv[j] = inv_p(0, j);
    }
    const std::vector<double> comb = predictor::combine_multiclass(bias, inv, pri);
    for (std::size_t j = 0; j < k; ++j) out(i, j) = clip_prob(comb[j]);
  }
  return out;
}

ForwardEval forward_eval(const BagModel& m, const Matrix& X) {
  ForwardEval ev;
  ev.code = disentangle::encode(m.vae, X);
  const Matrix C = ev.code.content_mean();
  const Matrix B = ev.code.bias_mean();
  ev.inv_logits = mlp_forward(m.head.f_c, C);
  predictor::BiasHeadCache cache;
  ev.mixture = predictor::bias_head_forward(m.head, B, &cache);
  ev.weights = cache.weights;
  ev.combined = combine_rows(ev.mixture, ev.inv_logits, m.head.prior_logits);
  return ev;
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* r = probs.row(i);
    int best = 0;
    for (std::size_t j = 1; j < probs.cols; ++j)
      if (r[j] > r[best]) best = static_cast<int>(j);  // ties go to the lower index
    out[i] = best;
  }
  return out;
}

namespace {

double log_sum_exp(const double* v, std::size_t k) {
  double mx = v[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, v[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(v[j] - mx);
  return mx + std::log(s);
}

}  // namespace

LossParts loss_all(const BagModel& m, const Matrix& X, const std::vector<int>& y,
                   const Matrix& noise, double lambda0, double lambda1,
                   BagModel* grad) {
  require(X.rows == y.size(), "loss_all: label count mismatch");
  const std::size_t n = X.rows;
  const std::size_t k = m.n_classes();
  const std::size_t n_c = m.vae.n_c;
  const std::size_t n_b = m.vae.n_b;
  const std::size_t n_z = n_c + n_b;

  // --- forward ---
  MlpCache enc_cache;
  const disentangle::LatentBatch code = disentangle::encode(m.vae, X, &enc_cache);
  const Matrix Z = disentangle::reparameterize_with_noise(code, noise);
  MlpCache dec_cache;
  const Matrix x_hat = disentangle::decode(m.vae, Z, &dec_cache);

  const Matrix C = code.content_mean();
  const Matrix B = code.bias_mean();
  MlpCache fc_cache;
  const Matrix inv_logits = mlp_forward(m.head.f_c, C, &fc_cache);
  predictor::BiasHeadCache bias_cache;
  const Matrix mixture = predictor::bias_head_forward(m.head, B, &bias_cache);

  // Combined scores s = log(clip(mix)) + logsoftmax(inv) - logsoftmax(prior);
  // the decomposed prediction is softmax(s).
  Matrix scores(n, k);
  Matrix mix_clipped(n, k);
  const double prior_lse = log_sum_exp(m.head.prior_logits.data(), k);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv_lse = log_sum_exp(inv_logits.row(i), k);
    for (std::size_t j = 0; j < k; ++j) {
      mix_clipped(i, j) = clip_prob(mixture(i, j));
      scores(i, j) = std::log(mix_clipped(i, j)) + (inv_logits(i, j) - inv_lse) -
                     (m.head.prior_logits[j] - prior_lse);
    }
  }

  LossParts parts;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] < 0 || y[i] >= static_cast<int>(k))
      throw std::invalid_argument("loss_all: label out of range");
    parts.cls += log_sum_exp(scores.row(i), k) - scores(i, y[i]);
  }
  parts.cls /= static_cast<double>(n);
  parts.vae = disentangle::vae_loss(X, x_hat, code, m.vae.beta);
  parts.ind = disentangle::independence_penalty(C, B, y);
  parts.total = parts.cls + lambda0 * parts.vae + lambda1 * parts.ind;
  if (!std::isfinite(parts.total)) throw std::runtime_error("loss_all: non-finite loss");
  if (!grad) return parts;

  // --- backward ---
  const Matrix combined = softmax_rows(scores);
  Matrix d_scores(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      d_scores(i, j) =
          (combined(i, j) - (static_cast<int>(j) == y[i] ? 1.0 : 0.0)) / static_cast<double>(n);

  // log(clip(mix)) path; clipped entries pass no gradient.
  Matrix d_mixture(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const bool clipped = mixture(i, j) < kEpsClip || mixture(i, j) > 1.0 - kEpsClip;
      d_mixture(i, j) = clipped ? 0.0 : d_scores(i, j) / mix_clipped(i, j);
    }

  // logsoftmax backward for the invariant and prior paths.
  Matrix d_inv(n, k);
  const Matrix inv_probs = softmax_rows(inv_logits);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) row_sum += d_scores(i, j);
    for (std::size_t j = 0; j < k; ++j)
      d_inv(i, j) = d_scores(i, j) - inv_probs(i, j) * row_sum;
  }
  {
    Matrix pl(1, k);
    for (std::size_t j = 0; j < k; ++j) pl(0, j) = m.head.prior_logits[j];
    const Matrix prior_probs = softmax_rows(pl);
    for (std::size_t i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) row_sum += d_scores(i, j);
      for (std::size_t j = 0; j < k; ++j)
        grad->head.prior_logits[j] -= d_scores(i, j) - prior_probs(0, j) * row_sum;
    }
  }

  Matrix dB = predictor::bias_head_backward(m.head, bias_cache, d_mixture, grad->head);
  Matrix dC = mlp_backward(m.head.f_c, fc_cache, d_inv, grad->head.f_c);

  // Independence penalty.
  {
    Matrix dC_ind, dB_ind;
    disentangle::independence_penalty_backward(C, B, y, dC_ind, dB_ind);
    for (std::size_t i = 0; i < dC.size(); ++i) dC.data[i] += lambda1 * dC_ind.data[i];
    for (std::size_t i = 0; i < dB.size(); ++i) dB.data[i] += lambda1 * dB_ind.data[i];
  }

  // VAE path.
  const disentangle::VaeLossGrads vg =
      disentangle::vae_loss_backward(X, x_hat, code, m.vae.beta);
  Matrix d_xhat = vg.d_xhat;
  for (double& v : d_xhat.data) v *= lambda0;
  const Matrix dZ = mlp_backward(m.vae.decoder, dec_cache, d_xhat, grad->vae.decoder);

  // Assemble encoder output gradient: means then log-variances.
  Matrix d_enc_out(n, 2 * n_z);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n_z; ++j) {
      double dmean = lambda0 * vg.d_mean(i, j) + dZ(i, j);
      double dlv = lambda0 * vg.d_logvar(i, j) +
                   dZ(i, j) * 0.5 * std::exp(0.5 * code.logvar(i, j)) * noise(i, j);
      if (j < n_c)
        dmean += dC(i, j);
      else
        dmean += dB(i, j - n_c);
      // clamped log-variances pass no gradient
      if (std::fabs(code.logvar(i, j)) >= disentangle::kLogvarClamp) dlv = 0.0;
      d_enc_out(i, j) = dmean;
      d_enc_out(i, n_z + j) = dlv;
    }
  }
  mlp_backward(m.vae.encoder, enc_cache, d_enc_out, grad->vae.encoder);
  return parts;
}

std::string frozen_hash(const BagModel& m) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1,
          "frozen_hash: digest init failed");
  BagModel& mutable_m = const_cast<BagModel&>(m);
  for (const ParamView& view : frozen_param_views(mutable_m))
    EVP_DigestUpdate(ctx, view.data.data(), view.data.size_bytes());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace bag
