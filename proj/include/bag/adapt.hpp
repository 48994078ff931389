#pragma once

#include <string>
#include <vector>

#include "bag/matrix.hpp"
#include "bag/model.hpp"

namespace bag::adapt {

enum class CorrectionMode { binary_phi, multiclass_ls, none };

std::string correction_mode_name(CorrectionMode m);
CorrectionMode correction_mode_from_name(const std::string& name);

struct AdaptConfig {
  std::size_t epochs = 200;
  double step_size = 1.0;
  std::size_t batch_size = 0;  // 0 = full batch
  CorrectionMode correction_mode = CorrectionMode::binary_phi;
};

struct AdaptReport {
  double pseudo_agreement = -1.0;  // vs target truth when available
  double calibration_margin = 0.0;
  std::vector<double> ada_loss_trace;  // one entry per epoch
  bool correction_applied = false;
  bool fell_back = false;  // calibration invalid, correction dropped
};

// Argmax over the invariant head on encoded content means; ties break toward
// the lower class index.
std::vector<int> pseudo_label(const BagModel& model, const Matrix& X_target);

// Fine-tunes only the bias-aware predictor (experts, domain classifier,
// embeddings) by full-batch gradient descent on cross-entropy against the
// pseudo-labels. Everything else stays bit-identical.
AdaptReport tta_finetune(BagModel& model, const Matrix& X_target,
                         const std::vector<int>& pseudo, const AdaptConfig& config);

// Corrected class probabilities on x rows: the decomposed combination with the
// bias term passed through the calibration correction (phi for binary,
// simplex least squares for multi-class, or none).
Matrix final_predict(const BagModel& model, CorrectionMode mode, const Matrix& X);

// Full stage-2 pipeline: pseudo-label, fine-tune, report.
AdaptReport run_adaptation(BagModel& model, const Matrix& X_target,
                           const AdaptConfig& config,
                           const std::vector<int>* target_truth = nullptr);

}  // namespace bag::adapt
