#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bag {

// Clipping constant applied wherever a probability feeds a logit inside the
// model; keeps every emitted probability inside [kEpsClip, 1 - kEpsClip].
inline constexpr double kEpsClip = 1e-7;

inline double clip_prob(double p) {
  if (p < kEpsClip) return kEpsClip;
  if (p > 1.0 - kEpsClip) return 1.0 - kEpsClip;
  return p;
}

// Never returns exactly 0 or 1, so logit(sigmoid(l)) == l holds to 1e-12
// over |l| <= 30.
inline double sigmoid(double x) {
  double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  if (p >= 1.0) p = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  if (p <= 0.0) p = std::numeric_limits<double>::min();
  return p;
}

inline double logit(double p) {
  if (p <= 0.0 || p >= 1.0)
    throw std::domain_error("logit: argument outside (0, 1)");
  return std::log(p) - std::log1p(-p);
}

// Probability with its complement carried explicitly. A lone double loses
// ~4 decimal digits of logit near p = 1 - 1e-13; the pair keeps the
// sigmoid/logit round trip tight across |logit| <= 30.
struct ProbPair {
  double p;  // sigma(l)
  double q;  // sigma(-l) == 1 - p
};

inline ProbPair sigmoid_pair(double l) { return {sigmoid(l), sigmoid(-l)}; }

inline double logit(const ProbPair& pp) {
  if (pp.p <= 0.0 || pp.q <= 0.0)
    throw std::domain_error("logit: degenerate probability pair");
  return std::log(pp.p) - std::log(pp.q);
}

}  // namespace bag
