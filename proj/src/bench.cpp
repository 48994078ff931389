#include "bag/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "bag/calibrate.hpp"
#include "bag/io.hpp"
#include "bag/mathfn.hpp"

namespace bag::bench {

using json = nlohmann::ordered_json;

namespace {

scm::LabeledDataset take_rows(const scm::LabeledDataset& ds,
                              const std::vector<std::size_t>& idx) {
  scm::LabeledDataset out;
  out.X = Matrix(idx.size(), ds.X.cols);
  out.y.resize(idx.size());
  out.e.resize(idx.size());
  out.has_latents = ds.has_latents;
  if (ds.has_latents) out.latents = Matrix(idx.size(), ds.latents.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < ds.X.cols; ++j) out.X(i, j) = ds.X(idx[i], j);
    out.y[i] = ds.y[idx[i]];
    out.e[i] = ds.e[idx[i]];
    if (ds.has_latents)
      for (std::size_t j = 0; j < ds.latents.cols; ++j)
        out.latents(i, j) = ds.latents(idx[i], j);
  }
  return out;
}

std::size_t count_envs(const scm::LabeledDataset& ds) {
  std::set<int> envs(ds.e.begin(), ds.e.end());
  return envs.size();
}

}  // namespace

Split split_dataset(const scm::LabeledDataset& ds, double train_fraction,
                    std::uint64_t seed) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng(seed).split(0x5b11);
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
  const std::size_t n_train =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                   train_fraction * static_cast<double>(ds.size()))));
  Split s;
  s.train = take_rows(ds, {idx.begin(), idx.begin() + n_train});
  s.holdout = take_rows(ds, {idx.begin() + n_train, idx.end()});
  return s;
}

Metrics metrics_from_predictions(const std::vector<int>& pred,
                                 const std::vector<int>& truth, std::size_t n_classes) {
  if (pred.size() != truth.size() || truth.empty())
    throw std::invalid_argument("metrics: prediction/truth size mismatch or empty");
  Metrics m;
  m.confusion_counts = Matrix(n_classes, n_classes);
  std::vector<double> class_total(n_classes, 0.0), class_hit(n_classes, 0.0);
  double hits = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    m.confusion_counts(pred[i], truth[i]) += 1.0;
    class_total[truth[i]] += 1.0;
    if (pred[i] == truth[i]) {
      hits += 1.0;
      class_hit[truth[i]] += 1.0;
    }
  }
  m.accuracy = hits / static_cast<double>(truth.size());
  m.per_class_accuracy.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c)
    m.per_class_accuracy[c] = class_total[c] > 0.0 ? class_hit[c] / class_total[c] : 0.0;
  return m;
}

BagModel train_source(const TrainConfig& config, const scm::LabeledDataset& source,
                      std::vector<LossParts>* trace, Split* split_out) {
  if (count_envs(source) < 2)
    throw std::invalid_argument("train_source: need at least two source environments");
  const Split split = split_dataset(source, config.train_fraction, config.seed);
  if (split_out) *split_out = split;
  const scm::LabeledDataset& train = split.train;

  const std::size_t n_classes = source.n_classes();
  const std::size_t n_experts =
      config.variant == Variant::BAG_TTA ? 1 : count_envs(source);
  const double lambda0 = config.variant == Variant::BAG_VAE ? 0.0 : config.lambda0;

  Rng root(config.seed);
  Rng init_rng = root.split(1);
  Rng noise_rng = root.split(2);
  Rng shuffle_rng = root.split(3);

  BagModel model = make_bag_model(train.X.cols, config.n_c, config.n_b, n_classes,
                                  n_experts, config.embed_dim, config.decoder_hidden,
                                  config.beta, init_rng);

  // Prior starts at the empirical source log class frequencies.
  {
    std::vector<double> counts(n_classes, 1.0);
    for (int y : train.y) counts[y] += 1.0;
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (std::size_t c = 0; c < n_classes; ++c)
      model.head.prior_logits[c] = std::log(counts[c] / total);
  }

  std::vector<ParamView> views = param_views(model);
  OptimizerState opt = make_optimizer(total_size(views), config.step_size);

  // Parameters are flattened frozen-first (encoder, decoder, f_c, prior), so
  // the bias head occupies the tail of the flat vector.
  const std::size_t n_frozen_lead = total_size(frozen_param_views(model));
  const std::size_t warmup_epochs = static_cast<std::size_t>(
      config.bias_warmup * static_cast<double>(config.epochs));

  // Phase-2 mask of the schedule: the bias head, the encoder rows feeding the
  // bias block, and the decoder keep training; the content rows, f_c and the
  // prior stay fixed so the content assignment settled in phase 1 cannot
  // migrate into the bias block's role.
  std::vector<char> phase2_frozen(total_size(views), 0);
  {
    std::fill(phase2_frozen.begin(), phase2_frozen.begin() + n_frozen_lead, 1);
    const std::size_t n_x_dim = train.X.cols;
    const std::size_t n_z = config.n_c + config.n_b;
    auto unfreeze_encoder_row = [&](std::size_t r) {
      std::fill(phase2_frozen.begin() + r * n_x_dim,
                phase2_frozen.begin() + (r + 1) * n_x_dim, 0);
      phase2_frozen[2 * n_z * n_x_dim + r] = 0;  // matching bias entry
    };
    for (std::size_t j = 0; j < config.n_b; ++j) {
      unfreeze_encoder_row(config.n_c + j);                // bias means
      unfreeze_encoder_row(n_z + config.n_c + j);          // bias log-variances
    }
    const std::size_t enc_size = 2 * n_z * n_x_dim + 2 * n_z;
    const std::size_t dec_size = total_size(param_views(model.vae.decoder, "d"));
    std::fill(phase2_frozen.begin() + enc_size,
              phase2_frozen.begin() + enc_size + dec_size, 0);
  }

  const std::size_t n = train.size();
  const std::size_t batch =
      config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n)
      for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    LossParts epoch_parts;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      const scm::LabeledDataset b = batch < n ? take_rows(train, idx) : train;
      Matrix noise(b.size(), config.n_c + config.n_b);
      for (double& v : noise.data) v = noise_rng.normal();

      BagModel grads = zeros_like(model);
      const LossParts parts =
          loss_all(model, b.X, b.y, noise, lambda0, config.lambda1, &grads);
      std::vector<double> flat = flatten(views);
      std::vector<double> gflat = flatten(param_views(grads));
      if (epoch < warmup_epochs) {
        std::fill(gflat.begin() + n_frozen_lead, gflat.end(), 0.0);
      } else if (warmup_epochs > 0) {
        for (std::size_t i = 0; i < gflat.size(); ++i)
          if (phase2_frozen[i]) gflat[i] = 0.0;
      }
      optim_step(flat, gflat, opt);
      unflatten(views, flat);

      epoch_parts.cls += parts.cls;
      epoch_parts.vae += parts.vae;
      epoch_parts.ind += parts.ind;
      epoch_parts.total += parts.total;
      ++n_batches;
      if (batch >= n) break;
    }
    if (trace) {
      const double inv = 1.0 / static_cast<double>(n_batches);
      trace->push_back({epoch_parts.cls * inv, epoch_parts.vae * inv,
                        epoch_parts.ind * inv, epoch_parts.total * inv});
    }
  }

  // Calibration on the held-out source split.
  const std::vector<int> pseudo = adapt::pseudo_label(model, split.holdout.X);
  if (n_classes == 2) {
    model.calib = calibrate::estimate_binary(pseudo, split.holdout.y);
  } else {
    model.confusion = calibrate::estimate_confusion(pseudo, split.holdout.y, n_classes);
  }
  return model;
}

Mlp train_erm(const TrainConfig& config, const scm::LabeledDataset& train,
              std::vector<double>* trace) {
  const std::size_t n_classes = train.n_classes();
  Rng root(config.seed);
  Rng init_rng = root.split(4);
  Rng shuffle_rng = root.split(5);
  Mlp net = make_mlp({train.X.cols, config.erm_hidden, n_classes},
                     {Act::relu, Act::identity}, init_rng);

  std::vector<ParamView> views = param_views(net, "erm");
  OptimizerState opt = make_optimizer(total_size(views), config.step_size);

  const std::size_t n = train.size();
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n)
      for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      const scm::LabeledDataset b = batch < n ? take_rows(train, idx) : train;
      const std::size_t nb = b.size();

      MlpCache cache;
      const Matrix logits = mlp_forward(net, b.X, &cache);
      const Matrix probs = softmax_rows(logits);
      double loss = 0.0;
      Matrix d_logits(nb, n_classes);
      for (std::size_t i = 0; i < nb; ++i) {
        loss -= std::log(clip_prob(probs(i, b.y[i])));
        for (std::size_t j = 0; j < n_classes; ++j)
          d_logits(i, j) = (probs(i, j) - (static_cast<int>(j) == b.y[i] ? 1.0 : 0.0)) /
                           static_cast<double>(nb);
      }
      loss /= static_cast<double>(nb);
      if (!std::isfinite(loss)) throw std::runtime_error("train_erm: non-finite loss");

      Mlp grads = zeros_like(net);
      mlp_backward(net, cache, d_logits, grads);
      std::vector<double> flat = flatten(views);
      const std::vector<double> gflat = flatten(param_views(grads, "erm"));
      optim_step(flat, gflat, opt);
      unflatten(views, flat);

      epoch_loss += loss;
      ++n_batches;
      if (batch >= n) break;
    }
    if (trace) trace->push_back(epoch_loss / static_cast<double>(n_batches));
  }
  return net;
}

Matrix erm_probs(const Mlp& net, const Matrix& X) {
  return softmax_rows(mlp_forward(net, X));
}

adapt::AdaptConfig adapt_config_for(const TrainConfig& config, std::size_t n_classes) {
  adapt::AdaptConfig ac;
  ac.epochs = config.variant == Variant::BAG_RE ? 0 : config.tta_epochs;
  ac.step_size = config.tta_step_size;
  if (config.variant == Variant::BAG_RE)
    ac.correction_mode = adapt::CorrectionMode::none;
  else
    ac.correction_mode = n_classes == 2 ? adapt::CorrectionMode::binary_phi
                                        : adapt::CorrectionMode::multiclass_ls;
  return ac;
}

Metrics evaluate(const BagModel& model, const scm::LabeledDataset& ds, Stage stage,
                 const TrainConfig& config) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t n_classes = model.n_classes();
  Matrix probs;
  if (stage == Stage::pre_tta) {
    probs = forward_eval(model, ds.X).combined;
  } else {
    BagModel adapted = model;
    const adapt::AdaptConfig ac = adapt_config_for(config, n_classes);
    adapt::run_adaptation(adapted, ds.X, ac);
    probs = adapt::final_predict(adapted, ac.correction_mode, ds.X);
  }
  return metrics_from_predictions(argmax_rows(probs), ds.y, n_classes);
}

SeedRecord run_variant(Variant variant, TrainConfig config,
                       const scm::LabeledDataset& source,
                       const scm::LabeledDataset& target) {
  config.variant = variant;
  SeedRecord rec;
  rec.variant = variant_name(variant);
  rec.seed = config.seed;

  if (variant == Variant::ERM) {
    const Split split = split_dataset(source, config.train_fraction, config.seed);
    std::vector<double> trace;
    const Mlp net = train_erm(config, split.train, &trace);
    rec.loss_trace = trace;
    rec.source_val_acc =
        metrics_from_predictions(argmax_rows(erm_probs(net, split.holdout.X)),
                                 split.holdout.y, source.n_classes())
            .accuracy;
    const double target_acc =
        metrics_from_predictions(argmax_rows(erm_probs(net, target.X)), target.y,
                                 source.n_classes())
            .accuracy;
    rec.target_pre_acc = target_acc;
    rec.target_post_acc = target_acc;  // no adaptation stage
    return rec;
  }

  std::vector<LossParts> trace;
  Split split;
  const BagModel model = train_source(config, source, &trace, &split);
  for (const LossParts& p : trace) rec.loss_trace.push_back(p.total);
  rec.source_val_acc = evaluate(model, split.holdout, Stage::pre_tta, config).accuracy;
  rec.target_pre_acc = evaluate(model, target, Stage::pre_tta, config).accuracy;
  rec.target_post_acc = evaluate(model, target, Stage::post_tta, config).accuracy;
  return rec;
}

std::vector<Variant> all_variants() {
  return {Variant::BAG, Variant::BAG_VAE, Variant::BAG_RE, Variant::BAG_TTA,
          Variant::ERM};
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

RunReport benchmark(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                    const std::vector<Variant>& variants) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.config = base;
  report.seeds = seeds;

  const scm::ScmConfig scm_cfg = scm::default_config(base.scm_seed, base.knobs);
  for (std::uint64_t seed : seeds) {
    const scm::LabeledDataset source =
        scm::generate(scm_cfg, base.n_samples, scm::EnvSet::source, seed);
    const scm::LabeledDataset target =
        scm::generate(scm_cfg, base.n_target_samples, scm::EnvSet::target, seed);
    for (Variant v : variants) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      try {
        report.records.push_back(run_variant(v, cfg, source, target));
      } catch (const std::exception& e) {
        report.warnings.push_back("seed " + std::to_string(seed) + " variant " +
                                  variant_name(v) + " failed: " + e.what());
      }
    }
  }

  for (Variant v : variants) {
    VariantSummary s;
    s.variant = variant_name(v);
    std::vector<double> accs;
    for (const SeedRecord& r : report.records)
      if (r.variant == s.variant) accs.push_back(r.target_post_acc);
    s.completed_seeds = accs.size();
    if (!accs.empty())
      s.mean_target_post =
          std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
    if (accs.size() >= 2) {
      s.stddev_target_post = sample_stddev(accs);
      s.stddev_valid = true;
    }
    if (accs.size() < seeds.size())
      report.warnings.push_back("variant " + s.variant + " aggregated over " +
                                std::to_string(accs.size()) + "/" +
                                std::to_string(seeds.size()) + " seeds");
    report.summaries.push_back(s);
  }

  const auto t1 = std::chrono::steady_clock::now();
  std::cerr << "benchmark wall clock: "
            << std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()
            << " ms\n";
  return report;
}

void write_report(const RunReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);

  json j;
  j["config"] = json::parse(io::config_to_json(report.config));
  j["seeds"] = report.seeds;
  json records = json::array();
  for (const SeedRecord& r : report.records) {
    json rj;
    rj["variant"] = r.variant;
    rj["seed"] = r.seed;
    rj["source_val_acc"] = r.source_val_acc;
    rj["target_pre_acc"] = r.target_pre_acc;
    rj["target_post_acc"] = r.target_post_acc;
    rj["loss_trace"] = r.loss_trace;
    records.push_back(rj);
  }
  j["records"] = records;
  json summaries = json::array();
  for (const VariantSummary& s : report.summaries) {
    json sj;
    sj["variant"] = s.variant;
    sj["completed_seeds"] = s.completed_seeds;
    sj["mean_target_post"] = s.mean_target_post;
    if (s.stddev_valid)
      sj["stddev_target_post"] = s.stddev_target_post;
    else
      sj["stddev_target_post"] = nullptr;
    summaries.push_back(sj);
  }
  j["summaries"] = summaries;
  j["warnings"] = report.warnings;

  {
    std::ofstream out(out_dir + "/report.json");
    if (!out) throw std::system_error(errno, std::generic_category(),
                                      "cannot write " + out_dir + "/report.json");
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(out_dir + "/summary.csv");
    if (!out) throw std::system_error(errno, std::generic_category(),
                                      "cannot write " + out_dir + "/summary.csv");
    out << "variant,seed,source_val_acc,target_pre_acc,target_post_acc\n";
    for (const SeedRecord& r : report.records)
      out << r.variant << "," << r.seed << "," << io::format_double(r.source_val_acc)
          << "," << io::format_double(r.target_pre_acc) << ","
          << io::format_double(r.target_post_acc) << "\n";
  }
}

}  // namespace bag::bench
