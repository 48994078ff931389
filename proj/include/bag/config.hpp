#pragma once

#include <cstdint>
#include <string>

#include "bag/scm.hpp"

namespace bag {

enum class Variant { BAG, BAG_VAE, BAG_RE, BAG_TTA, ERM };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Flat experiment configuration; mirrors the JSON config file.
struct TrainConfig {
  // loss weights
  double lambda0 = 1.0;
  double lambda1 = 0.1;
  double beta = 1.0;
  // optimization
  std::size_t epochs = 200;
  std::size_t batch_size = 0;  // 0 = full batch
  double step_size = 1e-2;
  // Block-coordinate schedule on L_all: for the first bias_warmup fraction of
  // epochs only the encoder, decoder, invariant head and prior update (bias
  // head held at initialization); for the remainder the bias head, the
  // encoder rows feeding the bias block and the decoder update while the
  // content rows, invariant head and prior stay fixed.
  // The invariant path then claims the content block and keeps it;
  // under fully joint updates the higher-capacity expert mixture often
  // absorbs the content signal instead and the decomposition degenerates.
  // 0 disables the schedule (fully joint updates throughout).
  double bias_warmup = 0.5;
  // architecture
  std::size_t n_c = 5;
  std::size_t n_b = 5;
  std::size_t embed_dim = 8;
  std::size_t decoder_hidden = 16;
  std::size_t erm_hidden = 54;  // sized to roughly match the decomposed model
  // run control
  std::uint64_t seed = 0;
  double train_fraction = 0.8;  // remainder is the calibration holdout
  Variant variant = Variant::BAG;
  // test-time adaptation
  std::size_t tta_epochs = 200;
  double tta_step_size = 1.0;
  // data
  std::size_t n_samples = 5000;
  std::size_t n_target_samples = 2000;
  std::uint64_t scm_seed = 1234;
  scm::GeneratorKnobs knobs;

  void validate() const;
};

}  // namespace bag
