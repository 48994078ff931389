#include "bag/disentangle.hpp"

#include <cmath>
#include <stdexcept>

namespace bag::disentangle {

Matrix LatentBatch::content_mean() const {
  Matrix c(mean.rows, n_c);
  for (std::size_t i = 0; i < mean.rows; ++i)
    for (std::size_t j = 0; j < n_c; ++j) c(i, j) = mean(i, j);
  return c;
}

Matrix LatentBatch::bias_mean() const {
  Matrix b(mean.rows, n_b);
  for (std::size_t i = 0; i < mean.rows; ++i)
    for (std::size_t j = 0; j < n_b; ++j) b(i, j) = mean(i, n_c + j);
  return b;
}

void VaeParams::validate() const {
  encoder.validate();
  decoder.validate();
  require(beta >= 0.0, "VaeParams: beta must be nonnegative");
  require(encoder.out_dim() == 2 * n_z(), "VaeParams: encoder width must be 2 * n_z");
  require(decoder.in_dim() == n_z(), "VaeParams: decoder input must be n_z");
  require(encoder.in_dim() == decoder.out_dim(), "VaeParams: encoder/decoder dims do not chain");
}

VaeParams make_vae(std::size_t n_x, std::size_t n_c, std::size_t n_b,
                   std::size_t decoder_hidden, double beta, Rng& rng) {
  VaeParams v;
  v.n_c = n_c;
  v.n_b = n_b;
  v.beta = beta;
  const std::size_t n_z = n_c + n_b;
  v.encoder = make_mlp({n_x, 2 * n_z}, {Act::identity}, rng);
  v.decoder = make_mlp({n_z, decoder_hidden, n_x}, {Act::tanh, Act::identity}, rng);
  v.validate();
  return v;
}

LatentBatch encode(const VaeParams& params, const Matrix& X, MlpCache* cache) {
  const std::size_t n_z = params.n_z();
  Matrix out = mlp_forward(params.encoder, X, cache);
  LatentBatch code;
  code.n_c = params.n_c;
  code.n_b = params.n_b;
  code.mean = Matrix(X.rows, n_z);
  code.logvar = Matrix(X.rows, n_z);
  for (std::size_t i = 0; i < X.rows; ++i) {
    for (std::size_t j = 0; j < n_z; ++j) {
      code.mean(i, j) = out(i, j);
      double lv = out(i, n_z + j);
      lv = std::min(kLogvarClamp, std::max(-kLogvarClamp, lv));
      code.logvar(i, j) = lv;
    }
  }
  return code;
}

Matrix reparameterize(const LatentBatch& code, Rng& rng, Matrix* noise) {
  Matrix u(code.mean.rows, code.mean.cols);
  for (double& v : u.data) v = rng.normal();
  if (noise) *noise = u;
  return reparameterize_with_noise(code, u);
}

Matrix reparameterize_with_noise(const LatentBatch& code, const Matrix& noise) {
  require(noise.same_shape(code.mean), "reparameterize: noise shape mismatch");
  Matrix z(code.mean.rows, code.mean.cols);
  for (std::size_t i = 0; i < z.size(); ++i)
    z.data[i] = code.mean.data[i] + std::exp(0.5 * code.logvar.data[i]) * noise.data[i];
  return z;
}

Matrix decode(const VaeParams& params, const Matrix& Z, MlpCache* cache) {
  return mlp_forward(params.decoder, Z, cache);
}

double vae_loss(const Matrix& X, const Matrix& x_hat, const LatentBatch& code, double beta) {
  require(X.same_shape(x_hat), "vae_loss: reconstruction shape mismatch");
  require(X.rows == code.mean.rows, "vae_loss: code batch mismatch");
  const double n = static_cast<double>(X.rows);
  double recon = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double d = X.data[i] - x_hat.data[i];
    recon += d * d;
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < code.mean.size(); ++i) {
    const double mu = code.mean.data[i];
    const double lv = code.logvar.data[i];
    kl += 0.5 * (std::exp(lv) + mu * mu - 1.0 - lv);
  }
  const double loss = (recon + beta * kl) / n;
  if (!std::isfinite(loss)) throw std::runtime_error("vae_loss: non-finite value");
  return loss;
}

VaeLossGrads vae_loss_backward(const Matrix& X, const Matrix& x_hat,
                               const LatentBatch& code, double beta) {
  const double n = static_cast<double>(X.rows);
  VaeLossGrads g;
  g.d_xhat = Matrix(x_hat.rows, x_hat.cols);
  for (std::size_t i = 0; i < X.size(); ++i)
    g.d_xhat.data[i] = 2.0 * (x_hat.data[i] - X.data[i]) / n;
  g.d_mean = Matrix(code.mean.rows, code.mean.cols);
  g.d_logvar = Matrix(code.mean.rows, code.mean.cols);
  for (std::size_t i = 0; i < code.mean.size(); ++i) {
    g.d_mean.data[i] = beta * code.mean.data[i] / n;
    g.d_logvar.data[i] = beta * 0.5 * (std::exp(code.logvar.data[i]) - 1.0) / n;
  }
  return g;
}

namespace {

// Per-sample residuals b_i - mean{b_j : y_j == y_i}.
Matrix class_centered(const Matrix& B, const std::vector<int>& y) {
  int n_classes = 0;
  for (int v : y) n_classes = std::max(n_classes, v + 1);
  Matrix sums(static_cast<std::size_t>(n_classes), B.cols);
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < B.rows; ++i) {
    counts[y[i]] += 1;
    for (std::size_t j = 0; j < B.cols; ++j) sums(y[i], j) += B(i, j);
  }
  Matrix R(B.rows, B.cols);
  for (std::size_t i = 0; i < B.rows; ++i)
    for (std::size_t j = 0; j < B.cols; ++j)
      R(i, j) = B(i, j) - sums(y[i], j) / static_cast<double>(counts[y[i]]);
  return R;
}

Matrix cross_moment(const Matrix& C, const Matrix& R) {
  Matrix S = matmul_tn(C, R);
  const double n = static_cast<double>(C.rows);
  for (double& v : S.data) v /= n;
  return S;
}

}  // namespace

double independence_penalty(const Matrix& C, const Matrix& B, const std::vector<int>& y) {
  require(C.rows == B.rows && C.rows == y.size(), "independence_penalty: batch mismatch");
  if (C.rows == 0) throw std::invalid_argument("independence_penalty: empty batch");
  const Matrix S = cross_moment(C, class_centered(B, y));
  double pen = 0.0;
  for (double v : S.data) pen += v * v;
  return pen;
}

void independence_penalty_backward(const Matrix& C, const Matrix& B,
                                   const std::vector<int>& y, Matrix& dC, Matrix& dB) {
  const Matrix R = class_centered(B, y);
  const Matrix S = cross_moment(C, R);
  const double n = static_cast<double>(C.rows);

  // d pen / dS = 2 S; dC_i = (2/n) S r_i, dR_i = (2/n) S^T c_i.
  dC = Matrix(C.rows, C.cols);
  Matrix dR(B.rows, B.cols);
  for (std::size_t i = 0; i < C.rows; ++i) {
    for (std::size_t a = 0; a < C.cols; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < B.cols; ++b) s += S(a, b) * R(i, b);
      dC(i, a) = 2.0 * s / n;
    }
    for (std::size_t b = 0; b < B.cols; ++b) {
      double s = 0.0;
      for (std::size_t a = 0; a < C.cols; ++a) s += S(a, b) * C(i, a);
      dR(i, b) = 2.0 * s / n;
    }
  }

  // Centering backward: dB_j = dR_j - classmean(dR over class of j).
  int n_classes = 0;
  for (int v : y) n_classes = std::max(n_classes, v + 1);
  Matrix sums(static_cast<std::size_t>(n_classes), B.cols);
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < B.rows; ++i) {
    counts[y[i]] += 1;
    for (std::size_t j = 0; j < B.cols; ++j) sums(y[i], j) += dR(i, j);
  }
  dB = Matrix(B.rows, B.cols);
  for (std::size_t i = 0; i < B.rows; ++i)
    for (std::size_t j = 0; j < B.cols; ++j)
      dB(i, j) = dR(i, j) - sums(y[i], j) / static_cast<double>(counts[y[i]]);
}

}  // namespace bag::disentangle
