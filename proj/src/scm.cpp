#include "bag/scm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bag::scm {

namespace {

void require_dim(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("ScmConfig: ") + what);
}

std::vector<double> unit_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-8);
  for (double& x : v) x /= norm;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::size_t LabeledDataset::n_classes() const {
  int mx = -1;
  for (int v : y) mx = std::max(mx, v);
  return static_cast<std::size_t>(mx + 1);
}

void ScmConfig::validate() const {
  require_dim(n_envs >= 1, "need at least one environment");
  require_dim(env_probs.size() == n_envs, "env_probs size mismatch");
  double psum = 0.0;
  for (double p : env_probs) {
    require_dim(p > 0.0, "env_probs entries must be positive");
    psum += p;
  }
  require_dim(std::fabs(psum - 1.0) < 1e-9, "env_probs must sum to 1");
  require_dim(env_embeddings.size() == n_envs, "env_embeddings size mismatch");
  for (const auto& emb : env_embeddings)
    require_dim(emb.size() == n_b(), "env embedding dim mismatch");
  require_dim(!label_weights.empty(), "label_weights empty");
  require_dim(sigma_y >= 0.0 && sigma_c >= 0.0 && sigma_b >= 0.0 && sigma_x >= 0.0,
              "noise scales out of range");
  require_dim(content_anchor0.size() == content_anchor1.size(), "anchor dims differ");
  bool anchors_differ = false;
  for (std::size_t i = 0; i < content_anchor0.size(); ++i)
    if (content_anchor0[i] != content_anchor1[i]) anchors_differ = true;
  require_dim(anchors_differ, "content anchors must differ");
  require_dim(bias_table.size() == n_envs, "bias_table size mismatch");
  for (const auto& row : bias_table)
    for (const auto& off : row)
      require_dim(off.size() == n_b(), "bias_table entry dim mismatch");
  require_dim(mixing.rows == n_c() + n_b() && mixing.cols == mixing.rows,
              "mixing matrix must be (n_c+n_b) square");
  require_dim(target.embedding.size() == n_b(), "target embedding dim mismatch");
  for (const auto& off : target.bias_offsets)
    require_dim(off.size() == n_b(), "target bias offset dim mismatch");
  double cond = 0.0;
  try {
    cond = condition_number(mixing);
  } catch (const std::exception&) {  // singular: inverse fails
    cond = 1e6;
  }
  if (cond >= 1e6)
    throw std::invalid_argument("ScmConfig: mixing matrix is ill-conditioned");
}

int sample_environment(const std::vector<double>& env_probs, Rng& rng) {
  return rng.categorical(env_probs);
}

int sample_label(const std::vector<double>& embedding, const std::vector<double>& weights,
                 double offset, double sigma_y, Rng& rng) {
  double score = dot(weights, embedding) + offset;
  if (sigma_y > 0.0) score += rng.normal(0.0, sigma_y);
  return score > 0.0 ? 1 : 0;
}

std::vector<double> sample_content(int y, const ScmConfig& cfg, Rng& rng) {
  const std::vector<double>& anchor = y == 0 ? cfg.content_anchor0 : cfg.content_anchor1;
  std::vector<double> c(anchor);
  if (cfg.sigma_c > 0.0)
    for (double& v : c) v += rng.normal(0.0, cfg.sigma_c);
  return c;
}

std::vector<double> sample_bias(const std::vector<double>& embedding,
                                const std::vector<double>& bias_offset, double sigma_b,
                                Rng& rng) {
  std::vector<double> b(embedding.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = embedding[i] + bias_offset[i];
  if (sigma_b > 0.0)
    for (double& v : b) v += rng.normal(0.0, sigma_b);
  return b;
}

LabeledDataset generate(const ScmConfig& cfg, std::size_t n_samples, EnvSet env_set,
                        std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("generate: n_samples must be positive");
  cfg.validate();
  Rng rng = Rng(seed).split(env_set == EnvSet::source ? 0 : 1);

  const std::size_t nz = cfg.n_c() + cfg.n_b();
  LabeledDataset ds;
  ds.X = Matrix(n_samples, cfg.n_x());
  ds.y.resize(n_samples);
  ds.e.resize(n_samples);
  ds.has_latents = true;
  ds.latents = Matrix(n_samples, nz);

  std::vector<double> z(nz);
  for (std::size_t i = 0; i < n_samples; ++i) {
    int env;
    const std::vector<double>* embedding;
    const std::array<std::vector<double>, 2>* offsets;
    if (env_set == EnvSet::source) {
      env = sample_environment(cfg.env_probs, rng);
      embedding = &cfg.env_embeddings[env];
      offsets = &cfg.bias_table[env];
    } else {
      env = static_cast<int>(cfg.n_envs);  // one past the source indices
      embedding = &cfg.target.embedding;
      offsets = &cfg.target.bias_offsets;
    }
    const int y = sample_label(*embedding, cfg.label_weights, cfg.label_offset,
                               cfg.sigma_y, rng);
    const std::vector<double> c = sample_content(y, cfg, rng);
    const std::vector<double> b = sample_bias(*embedding, (*offsets)[y], cfg.sigma_b, rng);

    std::copy(c.begin(), c.end(), z.begin());
    std::copy(b.begin(), b.end(), z.begin() + cfg.n_c());
    const std::vector<double> x = matvec(cfg.mixing, z);
    for (std::size_t j = 0; j < x.size(); ++j)
      ds.X(i, j) = x[j] + (cfg.sigma_x > 0.0 ? rng.normal(0.0, cfg.sigma_x) : 0.0);
    for (std::size_t j = 0; j < nz; ++j) ds.latents(i, j) = z[j];
    ds.y[i] = y;
    ds.e[i] = env;
  }
  return ds;
}

ScmConfig default_config(std::uint64_t seed, const GeneratorKnobs& knobs) {
  Rng rng = Rng(seed).split(0xc0f1);
  ScmConfig cfg;
  cfg.n_envs = knobs.n_envs;
  cfg.env_probs.assign(knobs.n_envs, 1.0 / static_cast<double>(knobs.n_envs));

  for (std::size_t k = 0; k < knobs.n_envs; ++k) {
    std::vector<double> emb(knobs.n_b);
    for (double& v : emb) v = rng.normal();
    cfg.env_embeddings.push_back(std::move(emb));
  }
  cfg.target.embedding.resize(knobs.n_b);
  for (double& v : cfg.target.embedding) v = rng.normal();

  // Label rule: center and rescale the weights so every environment keeps a
  // nontrivial label mix under the sigma_y noise.
  cfg.label_weights = unit_vector(knobs.n_b, rng);
  cfg.sigma_y = knobs.sigma_y;
  double mean_score = 0.0;
  for (const auto& emb : cfg.env_embeddings) mean_score += dot(cfg.label_weights, emb);
  mean_score += dot(cfg.label_weights, cfg.target.embedding);
  mean_score /= static_cast<double>(knobs.n_envs + 1);
  cfg.label_offset = -mean_score;
  double max_abs = 0.0;
  for (const auto& emb : cfg.env_embeddings)
    max_abs = std::max(max_abs, std::fabs(dot(cfg.label_weights, emb) + cfg.label_offset));
  max_abs = std::max(max_abs,
                     std::fabs(dot(cfg.label_weights, cfg.target.embedding) + cfg.label_offset));
  if (max_abs > 0.0) {
    const double scale = knobs.env_label_scale * std::max(knobs.sigma_y, 1e-6) / max_abs;
    if (scale < 1.0) {
      for (double& w : cfg.label_weights) w *= scale;
      cfg.label_offset *= scale;
    }
  }

  const std::vector<double> content_dir = unit_vector(knobs.n_c, rng);
  cfg.content_anchor0.resize(knobs.n_c);
  cfg.content_anchor1.resize(knobs.n_c);
  for (std::size_t i = 0; i < knobs.n_c; ++i) {
    cfg.content_anchor0[i] = -0.5 * knobs.content_sep * content_dir[i];
    cfg.content_anchor1[i] = 0.5 * knobs.content_sep * content_dir[i];
  }
  cfg.sigma_c = knobs.sigma_c;

  // Each source environment carries its own bias-label direction, so only an
  // environment-gated predictor can exploit the bias signal at full strength;
  // a single linear readout sees it diluted across directions. The held-out
  // environment reuses the dominant (first) environment's embedding with that
  // direction negated, so predictors that latched onto the gated bias signal
  // reverse on the target.
  std::vector<std::vector<double>> bias_dirs;
  for (std::size_t k = 0; k < knobs.n_envs; ++k) {
    std::vector<double> v = unit_vector(knobs.n_b, rng);
    for (const auto& prev : bias_dirs) {
      const double d = dot(v, prev);
      for (std::size_t i = 0; i < knobs.n_b; ++i) v[i] -= d * prev[i];
    }
    double norm = std::sqrt(dot(v, v));
    if (norm < 1e-6) {
      v = unit_vector(knobs.n_b, rng);
      norm = std::sqrt(dot(v, v));
    }
    for (double& x : v) x /= norm;
    bias_dirs.push_back(std::move(v));
  }
  for (std::size_t k = 0; k < knobs.n_envs; ++k) {
    std::array<std::vector<double>, 2> row;
    for (int y = 0; y < 2; ++y) {
      row[y].resize(knobs.n_b);
      const double sign = y == 1 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < knobs.n_b; ++i)
        row[y][i] = sign * 0.5 * knobs.bias_sep * bias_dirs[k][i];
    }
    cfg.bias_table.push_back(std::move(row));
  }
  cfg.target.embedding = cfg.env_embeddings[0];
  for (int y = 0; y < 2; ++y) {
    cfg.target.bias_offsets[y].resize(knobs.n_b);
    const double sign = y == 1 ? -1.0 : 1.0;  // reversed
    for (std::size_t i = 0; i < knobs.n_b; ++i)
      cfg.target.bias_offsets[y][i] = sign * 0.5 * knobs.bias_sep * bias_dirs[0][i];
  }
  cfg.sigma_b = knobs.sigma_b;

  cfg.mixing = random_rotation(knobs.n_c + knobs.n_b, rng);
  cfg.sigma_x = knobs.sigma_x;
  cfg.validate();
  return cfg;
}

}  // namespace bag::scm
