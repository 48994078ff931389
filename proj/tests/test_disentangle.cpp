#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "bag/disentangle.hpp"
#include "bag/matrix.hpp"
#include "bag/mlp.hpp"
#include "bag/optim.hpp"
#include "bag/rng.hpp"

using namespace bag;
using namespace bag::disentangle;

namespace {

VaeParams small_vae(std::uint64_t seed = 1, double beta = 1.0) {
  Rng rng(seed);
  return make_vae(/*n_x=*/4, /*n_c=*/2, /*n_b=*/1, /*decoder_hidden=*/5, beta, rng);
}

}  // namespace

TEST_CASE("encode zero-weight encoder emits zero codes") {
  VaeParams v = small_vae();
  for (Layer& layer : v.encoder.layers) {
    std::fill(layer.W.data.begin(), layer.W.data.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  Rng rng(2);
  Matrix X = Matrix::gaussian(3, 4, rng, 1.0);
  const LatentBatch code = encode(v, X);
  for (double m : code.mean.data) CHECK(m == 0.0);
  for (double lv : code.logvar.data) CHECK(lv == 0.0);
}

TEST_CASE("encode is deterministic and the block split partitions the mean") {
  const VaeParams v = small_vae();
  Rng rng(3);
  Matrix X = Matrix::gaussian(5, 4, rng, 1.0);
  for (std::size_t j = 0; j < X.cols; ++j) X(4, j) = X(0, j);  // duplicate row

  const LatentBatch a = encode(v, X);
  const LatentBatch b = encode(v, X);
  CHECK(a.mean.data == b.mean.data);
  CHECK(a.logvar.data == b.logvar.data);
  for (std::size_t j = 0; j < a.mean.cols; ++j) CHECK(a.mean(4, j) == a.mean(0, j));

  const Matrix c = a.content_mean();
  const Matrix bm = a.bias_mean();
  REQUIRE(c.cols + bm.cols == a.mean.cols);
  for (std::size_t i = 0; i < a.mean.rows; ++i) {
    for (std::size_t j = 0; j < c.cols; ++j) CHECK(c(i, j) == a.mean(i, j));
    for (std::size_t j = 0; j < bm.cols; ++j) CHECK(bm(i, j) == a.mean(i, c.cols + j));
  }
}

TEST_CASE("encode clamps log-variances") {
  VaeParams v = small_vae();
  Layer& layer = v.encoder.layers.front();
  std::fill(layer.W.data.begin(), layer.W.data.end(), 0.0);
  // Mean block zero, logvar block far outside the clamp band.
  for (std::size_t i = v.n_z(); i < layer.b.size(); ++i) layer.b[i] = 1e3;
  Matrix X(1, 4);
  const LatentBatch code = encode(v, X);
  for (double lv : code.logvar.data) CHECK(lv == kLogvarClamp);
}

TEST_CASE("reparameterize collapse, determinism and variance") {
  LatentBatch code;
  code.n_c = 1;
  code.n_b = 1;
  code.mean = Matrix(1, 2);
  code.mean(0, 0) = 0.7;
  code.mean(0, 1) = -1.2;
  code.logvar = Matrix(1, 2, -40.0);  // clamped to -20 -> stddev ~ 4.5e-5
  for (double& lv : code.logvar.data) lv = std::max(-kLogvarClamp, lv);

  Rng rng(4);
  const Matrix z = reparameterize(code, rng);
  CHECK(std::fabs(z(0, 0) - 0.7) < 1e-4);
  CHECK(std::fabs(z(0, 1) + 1.2) < 1e-4);

  Rng r1(5), r2(5);
  CHECK(reparameterize(code, r1).data == reparameterize(code, r2).data);

  code.logvar = Matrix(1, 2, std::log(0.25));  // variance 0.25
  double sq = 0.0;
  const int n = 100000;
  Rng rv(6);
  for (int i = 0; i < n; ++i) {
    const double d = reparameterize(code, rv)(0, 0) - 0.7;
    sq += d * d;
  }
  CHECK(std::fabs(sq / n - 0.25) < 0.01);
}

TEST_CASE("reparameterize_with_noise reproduces the recorded draw") {
  const VaeParams v = small_vae();
  Rng rng(7);
  Matrix X = Matrix::gaussian(4, 4, rng, 1.0);
  const LatentBatch code = encode(v, X);
  Matrix noise;
  Rng ra(8);
  const Matrix z = reparameterize(code, ra, &noise);
  CHECK(reparameterize_with_noise(code, noise).data == z.data);
}

TEST_CASE("decode zero weights and determinism") {
  VaeParams v = small_vae();
  for (Layer& layer : v.decoder.layers) {
    std::fill(layer.W.data.begin(), layer.W.data.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  Matrix Z(2, 3, 1.0);
  const Matrix xh = decode(v, Z);
  for (double x : xh.data) CHECK(x == 0.0);

  const VaeParams w = small_vae(9);
  CHECK(decode(w, Z).data == decode(w, Z).data);
}

TEST_CASE("vae_loss closed-form values") {
  Matrix X(1, 2);
  X(0, 0) = 0.3;
  X(0, 1) = -0.4;
  LatentBatch code;
  code.n_c = 1;
  code.n_b = 1;
  code.mean = Matrix(1, 2);
  code.logvar = Matrix(1, 2);

  // Perfect reconstruction with a standard-normal posterior.
  CHECK(vae_loss(X, X, code, 1.0) == doctest::Approx(0.0).epsilon(1e-15));

  // beta = 0: pure squared reconstruction error.
  Matrix xh(1, 2);
  xh(0, 0) = 0.3 + 0.1;
  xh(0, 1) = -0.4 - 0.2;
  CHECK(vae_loss(X, xh, code, 0.0) == doctest::Approx(0.01 + 0.04).epsilon(1e-12));

  // KL(N((1,0), I) || N(0, I)) = 0.5.
  code.mean(0, 0) = 1.0;
  CHECK(vae_loss(X, X, code, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(vae_loss(X, xh, code, 2.0) == doctest::Approx(0.05 + 2.0 * 0.5).epsilon(1e-12));
}

TEST_CASE("vae_loss rejects non-finite input") {
  Matrix X(1, 1);
  Matrix xh(1, 1, std::numeric_limits<double>::infinity());
  LatentBatch code;
  code.n_c = 1;
  code.n_b = 0;
  code.mean = Matrix(1, 1);
  code.logvar = Matrix(1, 1);
  CHECK_THROWS_AS(vae_loss(X, xh, code, 1.0), std::runtime_error);
}

TEST_CASE("vae_loss gradients match central differences") {
  Rng rng(10);
  Matrix X = Matrix::gaussian(3, 2, rng, 1.0);
  Matrix xh = Matrix::gaussian(3, 2, rng, 1.0);
  LatentBatch code;
  code.n_c = 1;
  code.n_b = 1;
  code.mean = Matrix::gaussian(3, 2, rng, 1.0);
  code.logvar = Matrix::gaussian(3, 2, rng, 0.5);
  const double beta = 0.7;

  // Pack (xh, mean, logvar) into one flat vector for grad_check.
  const std::size_t m = xh.size();
  auto f = [&](const std::vector<double>& p, std::vector<double>* g) {
    LatentBatch c2 = code;
    Matrix x2 = xh;
    std::copy(p.begin(), p.begin() + m, x2.data.begin());
    std::copy(p.begin() + m, p.begin() + 2 * m, c2.mean.data.begin());
    std::copy(p.begin() + 2 * m, p.end(), c2.logvar.data.begin());
    if (g) {
      const VaeLossGrads grads = vae_loss_backward(X, x2, c2, beta);
      g->resize(3 * m);
      std::copy(grads.d_xhat.data.begin(), grads.d_xhat.data.end(), g->begin());
      std::copy(grads.d_mean.data.begin(), grads.d_mean.data.end(), g->begin() + m);
      std::copy(grads.d_logvar.data.begin(), grads.d_logvar.data.end(), g->begin() + 2 * m);
    }
    return vae_loss(X, x2, c2, beta);
  };
  std::vector<double> p0(3 * m);
  std::copy(xh.data.begin(), xh.data.end(), p0.begin());
  std::copy(code.mean.data.begin(), code.mean.data.end(), p0.begin() + m);
  std::copy(code.logvar.data.begin(), code.logvar.data.end(), p0.begin() + 2 * m);
  CHECK(grad_check(f, p0) < 1e-5);
}

TEST_CASE("independence_penalty trivial zeros") {
  // One sample per class: every residual is zero.
  Matrix C1(2, 2, 1.0), B1(2, 3, 2.0);
  CHECK(independence_penalty(C1, B1, {0, 1}) == 0.0);

  // Constant content: residuals sum to zero per class, so S vanishes.
  Matrix C2(4, 1, 3.0);
  Matrix B2(4, 1);
  B2.data = {1.0, 0.0, 3.0, 1.0};
  CHECK(independence_penalty(C2, B2, {0, 0, 1, 1}) ==
        doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("independence_penalty hand-built batch") {
  // c = (1,-1,2,-2), b = (1,0,3,1), y = (0,0,1,1).
  // Class means of b: 0.5 and 2 -> residuals (0.5,-0.5,1,-1).
  // S = (1/4)(1*0.5 + (-1)(-0.5) + 2*1 + (-2)(-1)) = 1.25 -> penalty 1.5625.
  Matrix C(4, 1), B(4, 1);
  C.data = {1.0, -1.0, 2.0, -2.0};
  B.data = {1.0, 0.0, 3.0, 1.0};
  CHECK(independence_penalty(C, B, {0, 0, 1, 1}) ==
        doctest::Approx(1.5625).epsilon(1e-12));
}

TEST_CASE("independence_penalty class-shift invariance and nonnegativity") {
  Rng rng(11);
  Matrix C = Matrix::gaussian(20, 3, rng, 1.0);
  Matrix B = Matrix::gaussian(20, 2, rng, 1.0);
  std::vector<int> y(20);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);

  const double base = independence_penalty(C, B, y);
  CHECK(base >= 0.0);

  Matrix shifted = B;
  for (std::size_t i = 0; i < shifted.rows; ++i)
    for (std::size_t j = 0; j < shifted.cols; ++j)
      shifted(i, j) += y[i] == 0 ? 5.0 : -3.0;  // per-class constant vector
  CHECK(independence_penalty(C, shifted, y) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("independence_penalty rejects an empty batch") {
  Matrix C(0, 1), B(0, 1);
  CHECK_THROWS_AS(independence_penalty(C, B, {}), std::invalid_argument);
}

TEST_CASE("independence_penalty gradients match central differences") {
  Rng rng(12);
  Matrix C = Matrix::gaussian(6, 2, rng, 1.0);
  Matrix B = Matrix::gaussian(6, 3, rng, 1.0);
  const std::vector<int> y = {0, 1, 0, 1, 1, 0};

  const std::size_t nc = C.size();
  auto f = [&](const std::vector<double>& p, std::vector<double>* g) {
    Matrix c2 = C, b2 = B;
    std::copy(p.begin(), p.begin() + nc, c2.data.begin());
    std::copy(p.begin() + nc, p.end(), b2.data.begin());
    if (g) {
      Matrix dC(c2.rows, c2.cols), dB(b2.rows, b2.cols);
      independence_penalty_backward(c2, b2, y, dC, dB);
      g->resize(p.size());
      std::copy(dC.data.begin(), dC.data.end(), g->begin());
      std::copy(dB.data.begin(), dB.data.end(), g->begin() + nc);
    }
    return independence_penalty(c2, b2, y);
  };
  std::vector<double> p0(C.size() + B.size());
  std::copy(C.data.begin(), C.data.end(), p0.begin());
  std::copy(B.data.begin(), B.data.end(), p0.begin() + nc);
  CHECK(grad_check(f, p0) < 1e-5);
}
