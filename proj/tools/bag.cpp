// Command-line front end: data generation, training, adaptation, evaluation
// and the full multi-seed benchmark.

#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <CLI11.hpp>

#include "bag/bench.hpp"
#include "bag/io.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

int cmd_generate(const std::string& config_path, const std::string& out_path,
                 std::uint64_t seed, const std::string& env_set) {
  const bag::TrainConfig cfg = bag::io::read_config(config_path);
  const bag::scm::ScmConfig scm_cfg = bag::scm::default_config(cfg.scm_seed, cfg.knobs);
  const bool target = env_set == "target";
  const std::size_t n = target ? cfg.n_target_samples : cfg.n_samples;
  const bag::scm::LabeledDataset ds = bag::scm::generate(
      scm_cfg, n, target ? bag::scm::EnvSet::target : bag::scm::EnvSet::source, seed);
  bag::io::write_dataset(ds, cfg.n_c, cfg.n_b, out_path);
  std::cout << "wrote " << ds.size() << " samples to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path) {
  const bag::TrainConfig cfg = bag::io::read_config(config_path);
  const bag::scm::LabeledDataset source = bag::io::read_dataset(data_path);
  if (cfg.variant == bag::Variant::ERM) {
    const bag::bench::Split split =
        bag::bench::split_dataset(source, cfg.train_fraction, cfg.seed);
    const bag::Mlp net = bag::bench::train_erm(cfg, split.train);
    bag::io::save_erm(net, cfg, out_path);
  } else {
    const bag::BagModel model = bag::bench::train_source(cfg, source);
    bag::io::save_model(model, cfg, out_path);
  }
  std::cout << "wrote checkpoint " << out_path << "\n";
  return 0;
}

int cmd_adapt(const std::string& ckpt_path, const std::string& target_path,
              const std::string& out_path) {
  bag::io::LoadedModel lm = bag::io::load_model(ckpt_path);
  const bag::scm::LabeledDataset target = bag::io::read_dataset(target_path);
  const bag::adapt::AdaptConfig ac =
      bag::bench::adapt_config_for(lm.config, lm.model.n_classes());
  const bag::adapt::AdaptReport report =
      bag::adapt::run_adaptation(lm.model, target.X, ac, &target.y);
  bag::io::save_model(lm.model, lm.config, out_path);
  std::cout << "adapted on " << target.size() << " samples; pseudo-label agreement "
            << report.pseudo_agreement << ", calibration margin "
            << report.calibration_margin << "\n";
  std::cout << "wrote checkpoint " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& stage_name) {
  const bag::scm::LabeledDataset ds = bag::io::read_dataset(data_path);
  bag::bench::Metrics metrics;
  if (bag::io::checkpoint_is_erm(ckpt_path)) {
    const bag::io::LoadedErm le = bag::io::load_erm(ckpt_path);
    metrics = bag::bench::metrics_from_predictions(
        bag::argmax_rows(bag::bench::erm_probs(le.net, ds.X)), ds.y, ds.n_classes());
  } else {
    const bag::io::LoadedModel lm = bag::io::load_model(ckpt_path);
    const bag::bench::Stage stage = stage_name == "post_tta"
                                        ? bag::bench::Stage::post_tta
                                        : bag::bench::Stage::pre_tta;
    metrics = bag::bench::evaluate(lm.model, ds, stage, lm.config);
  }
  std::cout << "accuracy " << metrics.accuracy << "\n";
  for (std::size_t c = 0; c < metrics.per_class_accuracy.size(); ++c)
    std::cout << "class " << c << " accuracy " << metrics.per_class_accuracy[c] << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::vector<std::uint64_t>& seeds,
              const std::string& out_dir) {
  const bag::TrainConfig cfg = bag::io::read_config(config_path);
  const bag::bench::RunReport report =
      bag::bench::benchmark(cfg, seeds, bag::bench::all_variants());
  bag::bench::write_report(report, out_dir);
  for (const bag::bench::VariantSummary& s : report.summaries) {
    std::cout << s.variant << ": mean target accuracy " << s.mean_target_post;
    if (s.stddev_valid) std::cout << " +- " << s.stddev_target_post;
    std::cout << " (" << s.completed_seeds << " seeds)\n";
  }
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias-aware generalization benchmark"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, ckpt_path, target_path;
  std::string env_set = "source", stage = "pre_tta", out_dir = "bench_out";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  CLI::App* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "config JSON")->required();
  gen->add_option("--out", out_path, "output dataset path")->required();
  gen->add_option("--seed", seed, "data seed");
  gen->add_option("--env-set", env_set, "source|target")
      ->check(CLI::IsMember({"source", "target"}));

  CLI::App* train = app.add_subcommand("train", "Stage-1 source training");
  train->add_option("--config", config_path, "config JSON")->required();
  train->add_option("--data", data_path, "source dataset")->required();
  train->add_option("--out", out_path, "checkpoint path")->required();

  CLI::App* adapt = app.add_subcommand("adapt", "Test-time adaptation");
  adapt->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  adapt->add_option("--target", target_path, "target dataset")->required();
  adapt->add_option("--out", out_path, "adapted checkpoint path")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  eval->add_option("--data", data_path, "dataset")->required();
  eval->add_option("--stage", stage, "pre_tta|post_tta")
      ->check(CLI::IsMember({"pre_tta", "post_tta"}));

  CLI::App* bench = app.add_subcommand("bench", "Multi-seed benchmark over all variants");
  bench->add_option("--config", config_path, "config JSON")->required();
  bench->add_option("--seeds", seeds, "seed list");
  bench->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(config_path, out_path, seed, env_set);
    if (train->parsed()) return cmd_train(config_path, data_path, out_path);
    if (adapt->parsed()) return cmd_adapt(ckpt_path, target_path, out_path);
    if (eval->parsed()) return cmd_eval(ckpt_path, data_path, stage);
    if (bench->parsed()) return cmd_bench(config_path, seeds, out_dir);
  } catch (const std::system_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
