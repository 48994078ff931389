#include "bag/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "bag/mathfn.hpp"

namespace bag::calibrate {

BinaryCalib estimate_binary(const std::vector<int>& pseudo, const std::vector<int>& truth) {
  if (pseudo.size() != truth.size() || truth.empty())
    throw std::invalid_argument("estimate_binary: label sequences must match and be nonempty");
  BinaryCalib c;
  for (auto& row : c.counts) row = {0, 0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if ((pseudo[i] != 0 && pseudo[i] != 1) || (truth[i] != 0 && truth[i] != 1))
      throw std::invalid_argument("estimate_binary: labels must be binary");
    c.counts[pseudo[i]][truth[i]] += 1;
  }
  for (int cls = 0; cls < 2; ++cls) {
    const std::int64_t total = c.counts[0][cls] + c.counts[1][cls];
    if (total == 0)
      throw std::invalid_argument("estimate_binary: class " + std::to_string(cls) +
                                  " absent from truth");
  }
  c.h0 = static_cast<double>(c.counts[0][0] + 1) /
         static_cast<double>(c.counts[0][0] + c.counts[1][0] + 2);
  c.h1 = static_cast<double>(c.counts[1][1] + 1) /
         static_cast<double>(c.counts[0][1] + c.counts[1][1] + 2);
  return c;
}

InformativeCheck check_informative(const BinaryCalib& calib) {
  const double margin = calib.h0 + calib.h1 - 1.0;
  return {margin > kDeltaMargin, margin};
}

double correct_binary(double p_hat, const BinaryCalib& calib) {
  const double denom = calib.h0 + calib.h1 - 1.0;
  if (denom <= kDeltaMargin)
    throw std::runtime_error(
        "correct_binary: calibration margin too small; fall back to uncorrected bias logits");
  const double p = (p_hat + calib.h0 - 1.0) / denom;
  return std::min(1.0 - kEpsClip, std::max(kEpsClip, p));
}

double phi(double logit_val, const BinaryCalib& calib) {
  const double denom = calib.h0 + calib.h1 - 1.0;
  if (denom <= kDeltaMargin)
    throw std::runtime_error(
        "phi: calibration margin too small; fall back to uncorrected bias logits");
  // logit((sigma(l)+h0-1)/d) with 1 - (.) = (sigma(-l)-(1-h1))/d; the shared
  // denominator cancels and both pieces stay accurate at large |l|.
  const double num = sigmoid(logit_val) - (1.0 - calib.h0);
  const double cmp = sigmoid(-logit_val) - (1.0 - calib.h1);
  if (num <= 0.0) return logit(kEpsClip);
  if (cmp <= 0.0) return logit(1.0 - kEpsClip);
  return std::log(num) - std::log(cmp);
}

ConfusionMatrix estimate_confusion(const std::vector<int>& pseudo,
                                   const std::vector<int>& truth, std::size_t K) {
  if (pseudo.size() != truth.size() || truth.empty())
    throw std::invalid_argument("estimate_confusion: label sequences must match and be nonempty");
  ConfusionMatrix cm;
  cm.K = K;
  cm.counts = Matrix(K, K);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pseudo[i] < 0 || pseudo[i] >= static_cast<int>(K) || truth[i] < 0 ||
        truth[i] >= static_cast<int>(K))
      throw std::invalid_argument("estimate_confusion: label out of range");
    cm.counts(pseudo[i], truth[i]) += 1.0;
  }
  cm.eps = Matrix(K, K);
  for (std::size_t j = 0; j < K; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < K; ++i) col += cm.counts(i, j);
    if (col == 0.0)
      throw std::invalid_argument("estimate_confusion: class " + std::to_string(j) +
                                  " absent from truth");
    for (std::size_t i = 0; i < K; ++i)
      cm.eps(i, j) = (cm.counts(i, j) + 1.0) / (col + static_cast<double>(K));
  }
  return cm;
}

std::vector<double> project_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] > t) theta = t;  // largest feasible support wins
  }
  for (double& x : v) x = std::max(0.0, x - theta);
  return v;
}

std::vector<double> correct_multiclass(const std::vector<double>& e_hat,
                                       const ConfusionMatrix& cm) {
  const std::size_t K = cm.K;
  if (e_hat.size() != K)
    throw std::invalid_argument("correct_multiclass: estimate width mismatch");
  for (double v : e_hat)
    if (v < 0.0 || v > 1.0)
      throw std::invalid_argument("correct_multiclass: estimate entries must be in [0,1]");

  // Lipschitz bound on the gradient of ||eps p - e_hat||^2 via the Frobenius
  // norm of eps.
  double fro2 = 0.0;
  for (double v : cm.eps.data) fro2 += v * v;
  const double step = 1.0 / (2.0 * std::max(fro2, 1e-12));

  std::vector<double> p(K, 1.0 / static_cast<double>(K));
  std::vector<double> grad(K), next(K);
  const std::size_t max_iters = 10000;
  for (std::size_t it = 0; it < max_iters; ++it) {
    // grad = 2 eps^T (eps p - e_hat)
    std::vector<double> resid(K, 0.0);
    for (std::size_t i = 0; i < K; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < K; ++j) s += cm.eps(i, j) * p[j];
      resid[i] = s - e_hat[i];
    }
    for (std::size_t j = 0; j < K; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < K; ++i) s += cm.eps(i, j) * resid[i];
      grad[j] = 2.0 * s;
    }
    for (std::size_t j = 0; j < K; ++j) next[j] = p[j] - step * grad[j];
    next = project_simplex(std::move(next));
    double map_norm = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      const double d = (p[j] - next[j]) / step;
      map_norm += d * d;
    }
    p = next;
    if (std::sqrt(map_norm) < 1e-10) return p;
  }
  double resid2 = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) s += cm.eps(i, j) * p[j];
    const double d = s - e_hat[i];
    resid2 += d * d;
  }
  throw std::runtime_error("correct_multiclass: no convergence after 10000 iterations; residual " +
                           std::to_string(std::sqrt(resid2)));
}

}  // namespace bag::calibrate
