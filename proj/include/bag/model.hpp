#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bag/calibrate.hpp"
#include "bag/disentangle.hpp"
#include "bag/matrix.hpp"
#include "bag/optim.hpp"
#include "bag/predictor.hpp"

namespace bag {

// Every learnable object of the method plus the calibration stats estimated
// after source training.
struct BagModel {
  disentangle::VaeParams vae;
  predictor::DecomposedHead head;
  std::optional<calibrate::BinaryCalib> calib;
  std::optional<calibrate::ConfusionMatrix> confusion;

  std::size_t n_x() const { return vae.encoder.in_dim(); }
  std::size_t n_classes() const { return head.n_classes(); }
  void validate() const;
};

BagModel make_bag_model(std::size_t n_x, std::size_t n_c, std::size_t n_b,
                        std::size_t n_classes, std::size_t n_experts,
                        std::size_t embed_dim, std::size_t decoder_hidden, double beta,
                        Rng& rng);

BagModel zeros_like(const BagModel& m);

// All parameters in a fixed order (encoder, decoder, f_c, prior, domain
// classifier, embeddings, experts).
std::vector<ParamView> param_views(BagModel& m);
// The bias-aware predictor f_b: experts, domain classifier and embeddings.
std::vector<ParamView> bias_head_param_views(BagModel& m);
// Everything else (frozen during test-time adaptation).
std::vector<ParamView> frozen_param_views(BagModel& m);

struct LossParts {
  double cls = 0.0;
  double vae = 0.0;
  double ind = 0.0;
  double total = 0.0;
};

// L_all = L_cls + lambda0 * L_vae + lambda1 * L_ind on one batch, at fixed
// reparameterization noise. When grad is non-null, accumulates the full
// analytic gradient into it.
LossParts loss_all(const BagModel& m, const Matrix& X, const std::vector<int>& y,
                   const Matrix& noise, double lambda0, double lambda1,
                   BagModel* grad);

// Deterministic inference from posterior means.
struct ForwardEval {
  disentangle::LatentBatch code;
  Matrix inv_logits;  // n x K
  Matrix mixture;     // n x K bias-head output
  Matrix weights;     // n x M domain posteriors
  Matrix combined;    // n x K decomposed prediction, clipped simplex
};

ForwardEval forward_eval(const BagModel& m, const Matrix& X);

// Rows of class probabilities; each row combines clip(mixture), the invariant
// logits and the prior per the decomposition.
Matrix combine_rows(const Matrix& mixture, const Matrix& inv_logits,
                    const std::vector<double>& prior_logits);

std::vector<int> argmax_rows(const Matrix& probs);

// SHA-256 over the raw bytes of the frozen parameters (encoder, decoder, f_c,
// prior) in their fixed order; used to enforce the adaptation freeze contract.
std::string frozen_hash(const BagModel& m);

}  // namespace bag
