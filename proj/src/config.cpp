#include "bag/config.hpp"

#include <stdexcept>

namespace bag {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::BAG: return "BAG";
    case Variant::BAG_VAE: return "BAG_VAE";
    case Variant::BAG_RE: return "BAG_RE";
    case Variant::BAG_TTA: return "BAG_TTA";
    case Variant::ERM: return "ERM";
  }
  return "BAG";
}

Variant variant_from_name(const std::string& name) {
  if (name == "BAG") return Variant::BAG;
  if (name == "BAG_VAE") return Variant::BAG_VAE;
  if (name == "BAG_RE") return Variant::BAG_RE;
  if (name == "BAG_TTA") return Variant::BAG_TTA;
  if (name == "ERM") return Variant::ERM;
  throw std::invalid_argument("unknown variant: " + name);
}

void TrainConfig::validate() const {
  if (lambda0 < 0.0 || lambda1 < 0.0 || beta < 0.0)
    throw std::invalid_argument("config: loss weights must be nonnegative");
  if (step_size <= 0.0 || tta_step_size <= 0.0)
    throw std::invalid_argument("config: step sizes must be positive");
  if (bias_warmup < 0.0 || bias_warmup >= 1.0)
    throw std::invalid_argument("config: bias_warmup must lie in [0, 1)");
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw std::invalid_argument("config: train_fraction must lie in (0, 1)");
  if (n_c == 0 || n_b == 0)
    throw std::invalid_argument("config: latent dimensions must be positive");
  if (n_samples == 0 || n_target_samples == 0)
    throw std::invalid_argument("config: sample counts must be positive");
  if (knobs.n_envs < 2)
    throw std::invalid_argument("config: need at least two source environments");
}

}  // namespace bag
