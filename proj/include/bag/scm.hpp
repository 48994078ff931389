#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "bag/matrix.hpp"
#include "bag/rng.hpp"

namespace bag::scm {

// Held-out environment: its embedding and per-label bias offsets.
struct EnvSpec {
  std::vector<double> embedding;                   // dim n_b
  std::array<std::vector<double>, 2> bias_offsets; // per label, dim n_b
};

// Ground-truth parameters of the causal generator.
struct ScmConfig {
  std::size_t n_envs = 0;
  std::vector<double> env_probs;                    // M-simplex
  std::vector<std::vector<double>> env_embeddings;  // M x n_b
  std::vector<double> label_weights;                // dim n_b
  double label_offset = 0.0;
  double sigma_y = 0.0;
  std::vector<double> content_anchor0, content_anchor1;  // dim n_c
  double sigma_c = 1.0;
  std::vector<std::array<std::vector<double>, 2>> bias_table;  // M x 2 x n_b
  double sigma_b = 0.0;
  Matrix mixing;  // (n_c + n_b) x (n_c + n_b)
  double sigma_x = 0.0;
  EnvSpec target;

  std::size_t n_c() const { return content_anchor0.size(); }
  std::size_t n_b() const { return label_weights.size(); }
  std::size_t n_x() const { return mixing.rows; }

  // Throws std::invalid_argument on any violated invariant, including an
  // ill-conditioned mixing matrix (condition number >= 1e6).
  void validate() const;
};

struct LabeledDataset {
  Matrix X;            // n x n_x
  std::vector<int> y;  // labels, contiguous from 0
  std::vector<int> e;  // environment indices
  bool has_latents = false;
  Matrix latents;      // n x (n_c + n_b) ground truth, when retained

  std::size_t size() const { return X.rows; }
  std::size_t n_classes() const;
};

enum class EnvSet { source, target };

int sample_environment(const std::vector<double>& env_probs, Rng& rng);

int sample_label(const std::vector<double>& embedding, const std::vector<double>& weights,
                 double offset, double sigma_y, Rng& rng);

std::vector<double> sample_content(int y, const ScmConfig& cfg, Rng& rng);

std::vector<double> sample_bias(const std::vector<double>& embedding,
                                const std::vector<double>& bias_offset, double sigma_b,
                                Rng& rng);

LabeledDataset generate(const ScmConfig& cfg, std::size_t n_samples, EnvSet env_set,
                        std::uint64_t seed);

// Scalar knobs of the default generator, overridable from config files.
struct GeneratorKnobs {
  std::size_t n_envs = 4;
  std::size_t n_c = 5;
  std::size_t n_b = 5;
  double sigma_c = 1.0;
  double sigma_b = 0.5;
  double sigma_x = 0.05;
  double sigma_y = 1.0;
  double content_sep = 3.8;  // ||c1 - c0||
  double bias_sep = 3.5;     // label-dependent bias shift, source direction
  // Cap on |w . E_e + b0| as a multiple of sigma_y. Keeping the direct
  // environment->label dependence weak keeps p(y | content) transferable to
  // the held-out environment.
  double env_label_scale = 0.15;
};

// Source environments plus a held-out target whose bias-label correlation is
// reversed relative to the sources.
ScmConfig default_config(std::uint64_t seed, const GeneratorKnobs& knobs = {});

}  // namespace bag::scm
