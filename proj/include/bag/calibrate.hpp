#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bag/matrix.hpp"

namespace bag::calibrate {

// Guard on the correction denominator h0 + h1 - 1; below this the closed-form
// correction amplifies estimation noise and callers fall back.
inline constexpr double kDeltaMargin = 0.05;

struct BinaryCalib {
  double h0 = 1.0;  // P(yhat=0 | y=0)
  double h1 = 1.0;  // P(yhat=1 | y=1)
  std::array<std::array<std::int64_t, 2>, 2> counts{};  // counts[yhat][y]
};

struct ConfusionMatrix {
  std::size_t K = 0;
  Matrix eps;     // eps(i, j) = P(yhat = i | y = j); columns sum to 1
  Matrix counts;  // raw counts, same layout
};

// Laplace-smoothed class-conditional correctness rates of pseudo-labels.
BinaryCalib estimate_binary(const std::vector<int>& pseudo, const std::vector<int>& truth);

struct InformativeCheck {
  bool informative = false;
  double margin = 0.0;  // h0 + h1 - 1
};
InformativeCheck check_informative(const BinaryCalib& calib);

// Inverts the pseudo-label mixing identity
// p_hat = h1 * p + (1 - h0) * (1 - p); result clipped to [eps, 1 - eps].
double correct_binary(double p_hat, const BinaryCalib& calib);

// Test-time correction on the logit scale:
// phi(l) = logit((sigma(l) + h0 - 1) / (h0 + h1 - 1)).
double phi(double logit_val, const BinaryCalib& calib);

// Column-wise Laplace-smoothed K x K confusion matrix.
ConfusionMatrix estimate_confusion(const std::vector<int>& pseudo,
                                   const std::vector<int>& truth, std::size_t K);

// argmin over the probability simplex of ||eps * p - e_hat||_2, by projected
// gradient descent with a gradient-mapping stopping certificate.
std::vector<double> correct_multiclass(const std::vector<double>& e_hat,
                                       const ConfusionMatrix& eps);

// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::vector<double> v);

}  // namespace bag::calibrate
