#include "bag/adapt.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "bag/mathfn.hpp"

namespace bag::adapt {

std::string correction_mode_name(CorrectionMode m) {
  switch (m) {
    case CorrectionMode::binary_phi: return "binary_phi";
    case CorrectionMode::multiclass_ls: return "multiclass_ls";
    case CorrectionMode::none: return "none";
  }
  return "none";
}

CorrectionMode correction_mode_from_name(const std::string& name) {
  if (name == "binary_phi") return CorrectionMode::binary_phi;
  if (name == "multiclass_ls") return CorrectionMode::multiclass_ls;
  if (name == "none") return CorrectionMode::none;
  throw std::invalid_argument("unknown correction mode: " + name);
}

std::vector<int> pseudo_label(const BagModel& model, const Matrix& X_target) {
  const disentangle::LatentBatch code = disentangle::encode(model.vae, X_target);
  const Matrix logits = mlp_forward(model.head.f_c, code.content_mean());
  return argmax_rows(logits);
}

namespace {

// Requested mode downgraded when the calibration cannot support it.
CorrectionMode effective_mode(const BagModel& model, CorrectionMode requested,
                              bool* fell_back) {
  if (fell_back) *fell_back = false;
  if (requested == CorrectionMode::binary_phi) {
    const bool usable =
        model.calib.has_value() && calibrate::check_informative(*model.calib).informative;
    if (!usable) {
      if (fell_back) *fell_back = true;
      if (model.n_classes() > 2 && model.confusion.has_value())
        return CorrectionMode::multiclass_ls;
      std::cerr << "warning: calibration margin too small, skipping phi correction\n";
      return CorrectionMode::none;
    }
  }
  if (requested == CorrectionMode::multiclass_ls && !model.confusion.has_value()) {
    if (fell_back) *fell_back = true;
    std::cerr << "warning: no confusion matrix available, skipping correction\n";
    return CorrectionMode::none;
  }
  return requested;
}

}  // namespace

AdaptReport tta_finetune(BagModel& model, const Matrix& X_target,
                         const std::vector<int>& pseudo, const AdaptConfig& config) {
  require(X_target.rows == pseudo.size(), "tta_finetune: pseudo-label count mismatch");
  AdaptReport report;
  if (model.calib) report.calibration_margin = calibrate::check_informative(*model.calib).margin;

  // Encoder is frozen; bias codes are fixed for the whole adaptation.
  const Matrix B = disentangle::encode(model.vae, X_target).bias_mean();
  const std::size_t n = B.rows;
  const std::size_t k = model.n_classes();

  std::vector<ParamView> views = bias_head_param_views(model);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    predictor::BiasHeadCache cache;
    const Matrix mixture = predictor::bias_head_forward(model.head, B, &cache);

    double loss = 0.0;
    Matrix d_mixture(n, k);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = clip_prob(mixture(i, pseudo[i]));
      loss -= std::log(p);
      const bool clipped = mixture(i, pseudo[i]) < kEpsClip;
      if (!clipped) d_mixture(i, pseudo[i]) = -1.0 / (p * static_cast<double>(n));
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss))
      throw std::runtime_error("tta_finetune: non-finite adaptation loss at epoch " +
                               std::to_string(epoch));
    report.ada_loss_trace.push_back(loss);

    BagModel grads = zeros_like(model);
    predictor::bias_head_backward(model.head, cache, d_mixture, grads.head);
    std::vector<double> flat = flatten(views);
    const std::vector<double> gflat = flatten(bias_head_param_views(grads));
    sgd_step(flat, gflat, config.step_size);
    unflatten(views, flat);
  }
  return report;
}

Matrix final_predict(const BagModel& model, CorrectionMode mode, const Matrix& X) {
  const ForwardEval ev = forward_eval(model, X);
  bool fell_back = false;
  const CorrectionMode eff = effective_mode(model, mode, &fell_back);
  const std::size_t k = model.n_classes();

  if (eff == CorrectionMode::none)
    return ev.combined;

  Matrix out(X.rows, k);
  if (eff == CorrectionMode::binary_phi) {
    require(k == 2, "final_predict: binary correction needs two classes");
    const calibrate::BinaryCalib& calib = *model.calib;
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double bias_logit = logit(clip_prob(ev.mixture(i, 1)));
      const double corrected = calibrate::phi(bias_logit, calib);
      const double inv_diff = ev.inv_logits(i, 1) - ev.inv_logits(i, 0);
      const double prior_diff = model.head.prior_logits[1] - model.head.prior_logits[0];
      const double p1 = clip_prob(sigmoid(corrected + inv_diff - prior_diff));
      out(i, 0) = 1.0 - p1;
      out(i, 1) = p1;
    }
    return out;
  }

  // multiclass_ls: per-sample simplex least squares on the mixture estimate of
  // E[yhat | b], then the product-ratio combination.
  const calibrate::ConfusionMatrix& cm = *model.confusion;
  Matrix prior(1, k);
  for (std::size_t j = 0; j < k; ++j) prior(0, j) = model.head.prior_logits[j];
  const Matrix prior_p = softmax_rows(prior);
  const std::vector<double> pri(prior_p.row(0), prior_p.row(0) + k);
  for (std::size_t i = 0; i < X.rows; ++i) {
    std::vector<double> e_hat(k);
    for (std::size_t j = 0; j < k; ++j) e_hat[j] = clip_prob(ev.mixture(i, j));
    const std::vector<double> corrected = calibrate::correct_multiclass(e_hat, cm);
    Matrix row(1, k);
    for (std::size_t j = 0; j < k; ++j) row(0, j) = ev.inv_logits(i, j);
    const Matrix inv_p = softmax_rows(row);
    std::vector<double> bias(k), inv(k);
    for (std::size_t j = 0; j < k; ++j) {
      bias[j] = clip_prob(corrected[j]);
      inv[j] = inv_p(0, j);
    }
    const std::vector<double> comb = predictor::combine_multiclass(bias, inv, pri);
    for (std::size_t j = 0; j < k; ++j) out(i, j) = clip_prob(comb[j]);
  }
  return out;
}

AdaptReport run_adaptation(BagModel& model, const Matrix& X_target,
                           const AdaptConfig& config,
                           const std::vector<int>* target_truth) {
  const std::vector<int> pseudo = pseudo_label(model, X_target);
  AdaptReport report = tta_finetune(model, X_target, pseudo, config);
  if (target_truth) {
    double agree = 0.0;
    for (std::size_t i = 0; i < pseudo.size(); ++i)
      if (pseudo[i] == (*target_truth)[i]) agree += 1.0;
    report.pseudo_agreement = agree / static_cast<double>(pseudo.size());
  }
  bool fell_back = false;
  const CorrectionMode eff = effective_mode(model, config.correction_mode, &fell_back);
  report.correction_applied = eff != CorrectionMode::none;
  report.fell_back = fell_back;
  return report;
}

}  // namespace bag::adapt
