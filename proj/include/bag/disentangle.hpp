#pragma once

#include <vector>

#include "bag/matrix.hpp"
#include "bag/mlp.hpp"
#include "bag/rng.hpp"

namespace bag::disentangle {

// Log-variances are clamped to this band before use.
inline constexpr double kLogvarClamp = 20.0;

// Encoder output split into content and bias blocks (batch form; row i holds
// sample i).
struct LatentBatch {
  Matrix mean;    // n x n_z
  Matrix logvar;  // n x n_z, clamped
  std::size_t n_c = 0;
  std::size_t n_b = 0;

  std::size_t n_z() const { return n_c + n_b; }
  Matrix content_mean() const;
  Matrix bias_mean() const;
};

struct VaeParams {
  Mlp encoder;  // n_x -> 2 * n_z (means then log-variances)
  Mlp decoder;  // n_z -> n_x
  double beta = 1.0;
  std::size_t n_c = 0;
  std::size_t n_b = 0;

  std::size_t n_z() const { return n_c + n_b; }
  void validate() const;
};

VaeParams make_vae(std::size_t n_x, std::size_t n_c, std::size_t n_b,
                   std::size_t decoder_hidden, double beta, Rng& rng);

LatentBatch encode(const VaeParams& params, const Matrix& X, MlpCache* cache = nullptr);

// z = mean + exp(logvar / 2) * u with u ~ N(0, I). The noise draw is written
// to *noise when requested so gradients can be checked at fixed noise.
Matrix reparameterize(const LatentBatch& code, Rng& rng, Matrix* noise = nullptr);
Matrix reparameterize_with_noise(const LatentBatch& code, const Matrix& noise);

Matrix decode(const VaeParams& params, const Matrix& Z, MlpCache* cache = nullptr);

// Mean over the batch of ||x - x_hat||^2 + beta * KL(q(z|x) || N(0, I)).
double vae_loss(const Matrix& X, const Matrix& x_hat, const LatentBatch& code, double beta);

// Gradients of vae_loss w.r.t. x_hat, mean and logvar (analytic, batch-mean
// normalized).
struct VaeLossGrads {
  Matrix d_xhat;
  Matrix d_mean;
  Matrix d_logvar;
};
VaeLossGrads vae_loss_backward(const Matrix& X, const Matrix& x_hat,
                               const LatentBatch& code, double beta);

// Squared Frobenius norm of the empirical class-centered cross-covariance
// (1/n) sum_i c_i (b_i - mean_b[class of i])^T.
double independence_penalty(const Matrix& C, const Matrix& B, const std::vector<int>& y);

// Gradients of independence_penalty w.r.t. C and B.
void independence_penalty_backward(const Matrix& C, const Matrix& B,
                                   const std::vector<int>& y, Matrix& dC, Matrix& dB);

}  // namespace bag::disentangle
