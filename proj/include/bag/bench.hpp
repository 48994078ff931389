#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bag/adapt.hpp"
#include "bag/config.hpp"
#include "bag/model.hpp"
#include "bag/scm.hpp"

namespace bag::bench {

struct Split {
  scm::LabeledDataset train;
  scm::LabeledDataset holdout;
};

// Deterministic shuffled split; holdout feeds calibration and source-val.
Split split_dataset(const scm::LabeledDataset& ds, double train_fraction,
                    std::uint64_t seed);

struct Metrics {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  Matrix confusion_counts;  // predicted x true
};

Metrics metrics_from_predictions(const std::vector<int>& pred,
                                 const std::vector<int>& truth, std::size_t n_classes);

// Stage 1: joint optimization of all parameters on
// L_all = L_cls + lambda0 * L_vae + lambda1 * L_ind, then calibration on the
// held-out source split.
BagModel train_source(const TrainConfig& config, const scm::LabeledDataset& source,
                      std::vector<LossParts>* trace = nullptr, Split* split_out = nullptr);

// Plain MLP baseline with a roughly matched parameter count.
Mlp train_erm(const TrainConfig& config, const scm::LabeledDataset& train,
              std::vector<double>* trace = nullptr);
Matrix erm_probs(const Mlp& net, const Matrix& X);

enum class Stage { pre_tta, post_tta };

// post_tta adapts a copy of the model on the dataset first; the argument model
// is left untouched.
Metrics evaluate(const BagModel& model, const scm::LabeledDataset& ds, Stage stage,
                 const TrainConfig& config);

adapt::AdaptConfig adapt_config_for(const TrainConfig& config, std::size_t n_classes);

struct SeedRecord {
  std::string variant;
  std::uint64_t seed = 0;
  double source_val_acc = 0.0;
  double target_pre_acc = 0.0;
  double target_post_acc = 0.0;
  std::vector<double> loss_trace;  // total L_all per epoch (ERM: cross-entropy)
};

SeedRecord run_variant(Variant variant, TrainConfig config,
                       const scm::LabeledDataset& source,
                       const scm::LabeledDataset& target);

struct VariantSummary {
  std::string variant;
  double mean_target_post = 0.0;
  double stddev_target_post = 0.0;
  bool stddev_valid = false;  // needs >= 2 completed seeds
  std::size_t completed_seeds = 0;
};

struct RunReport {
  TrainConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedRecord> records;
  std::vector<VariantSummary> summaries;
  std::vector<std::string> warnings;  // per-seed failures, aggregation notes
};

std::vector<Variant> all_variants();

// Generates data, trains, adapts and evaluates every (seed, variant) pair;
// failures are recorded as warnings and skipped in aggregation.
RunReport benchmark(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                    const std::vector<Variant>& variants);

// report.json plus summary.csv under out_dir; byte-deterministic for a fixed
// (config, seed list). Timing goes to stderr only.
void write_report(const RunReport& report, const std::string& out_dir);

double sample_stddev(const std::vector<double>& values);

}  // namespace bag::bench
