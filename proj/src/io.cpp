#include "bag/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bag::io {

using json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::system_error(errno, std::generic_category(), "cannot write " + path);
  return out;
}

}  // namespace

void write_dataset(const scm::LabeledDataset& ds, std::size_t n_c, std::size_t n_b,
                   const std::string& path) {
  std::ofstream out = open_out(path);
  out << "bagset v1 n=" << ds.size() << " nx=" << ds.X.cols << " nc=" << n_c
      << " nb=" << n_b << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.X.cols; ++j) out << format_double(ds.X(i, j)) << ",";
    out << ds.y[i] << "," << ds.e[i];
    if (ds.has_latents)
      for (std::size_t j = 0; j < ds.latents.cols; ++j)
        out << "," << format_double(ds.latents(i, j));
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failure on " + path);
}

scm::LabeledDataset read_dataset(const std::string& path, std::size_t* n_c_out,
                                 std::size_t* n_b_out) {
  std::ifstream in = open_in(path);
  std::string header;
  std::getline(in, header);
  std::size_t n = 0, nx = 0, nc = 0, nb = 0;
  if (std::sscanf(header.c_str(), "bagset v1 n=%zu nx=%zu nc=%zu nb=%zu", &n, &nx, &nc,
                  &nb) != 4)
    throw std::runtime_error("bad dataset header in " + path);
  if (n_c_out) *n_c_out = nc;
  if (n_b_out) *n_b_out = nb;

  scm::LabeledDataset ds;
  ds.X = Matrix(n, nx);
  ds.y.resize(n);
  ds.e.resize(n);
  std::string line;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated dataset " + path);
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != nx + 2 && vals.size() != nx + 2 + nc + nb)
      throw std::runtime_error("bad row width in " + path);
    for (std::size_t j = 0; j < nx; ++j) ds.X(i, j) = vals[j];
    ds.y[i] = static_cast<int>(vals[nx]);
    ds.e[i] = static_cast<int>(vals[nx + 1]);
    if (vals.size() == nx + 2 + nc + nb) {
      if (!ds.has_latents) {
        ds.has_latents = true;
        ds.latents = Matrix(n, nc + nb);
      }
      for (std::size_t j = 0; j < nc + nb; ++j) ds.latents(i, j) = vals[nx + 2 + j];
    }
  }
  return ds;
}

namespace {

json mlp_to_json(const Mlp& m) {
  json j;
  json layers = json::array();
  for (const Layer& l : m.layers) {
    json lj;
    lj["rows"] = l.W.rows;
    lj["cols"] = l.W.cols;
    lj["act"] = act_name(l.act);
    lj["W"] = l.W.data;
    lj["b"] = l.b;
    layers.push_back(lj);
  }
  j["layers"] = layers;
  return j;
}

Mlp mlp_from_json(const json& j) {
  Mlp m;
  for (const json& lj : j.at("layers")) {
    Layer l;
    l.W = Matrix(lj.at("rows").get<std::size_t>(), lj.at("cols").get<std::size_t>());
    const auto w = lj.at("W").get<std::vector<double>>();
    if (w.size() != l.W.size())
      throw std::runtime_error("checkpoint: weight array size mismatch");
    l.W.data = w;
    l.b = lj.at("b").get<std::vector<double>>();
    if (l.b.size() != l.W.rows)
      throw std::runtime_error("checkpoint: bias array size mismatch");
    l.act = act_from_name(lj.at("act").get<std::string>());
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

json config_to_json_obj(const TrainConfig& c) {
  json j;
  j["lambda0"] = c.lambda0;
  j["lambda1"] = c.lambda1;
  j["beta"] = c.beta;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["step_size"] = c.step_size;
  j["bias_warmup"] = c.bias_warmup;
  j["n_c"] = c.n_c;
  j["n_b"] = c.n_b;
  j["embed_dim"] = c.embed_dim;
  j["decoder_hidden"] = c.decoder_hidden;
  j["erm_hidden"] = c.erm_hidden;
  j["seed"] = c.seed;
  j["train_fraction"] = c.train_fraction;
  j["variant"] = variant_name(c.variant);
  j["tta_epochs"] = c.tta_epochs;
  j["tta_step_size"] = c.tta_step_size;
  j["n_samples"] = c.n_samples;
  j["n_target_samples"] = c.n_target_samples;
  j["scm_seed"] = c.scm_seed;
  j["n_envs"] = c.knobs.n_envs;
  j["sigma_c"] = c.knobs.sigma_c;
  j["sigma_b"] = c.knobs.sigma_b;
  j["sigma_x"] = c.knobs.sigma_x;
  j["sigma_y"] = c.knobs.sigma_y;
  j["content_sep"] = c.knobs.content_sep;
  j["bias_sep"] = c.knobs.bias_sep;
  j["env_label_scale"] = c.knobs.env_label_scale;
  return j;
}

TrainConfig config_from_json_obj(const json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda0") c.lambda0 = value.get<double>();
    else if (key == "lambda1") c.lambda1 = value.get<double>();
    else if (key == "beta") c.beta = value.get<double>();
    else if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "step_size") c.step_size = value.get<double>();
    else if (key == "bias_warmup") c.bias_warmup = value.get<double>();
    else if (key == "n_c") c.n_c = value.get<std::size_t>();
    else if (key == "n_b") c.n_b = value.get<std::size_t>();
    else if (key == "embed_dim") c.embed_dim = value.get<std::size_t>();
    else if (key == "decoder_hidden") c.decoder_hidden = value.get<std::size_t>();
    else if (key == "erm_hidden") c.erm_hidden = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "train_fraction") c.train_fraction = value.get<double>();
    else if (key == "variant") c.variant = variant_from_name(value.get<std::string>());
    else if (key == "tta_epochs") c.tta_epochs = value.get<std::size_t>();
    else if (key == "tta_step_size") c.tta_step_size = value.get<double>();
    else if (key == "n_samples") c.n_samples = value.get<std::size_t>();
    else if (key == "n_target_samples") c.n_target_samples = value.get<std::size_t>();
    else if (key == "scm_seed") c.scm_seed = value.get<std::uint64_t>();
    else if (key == "n_envs") c.knobs.n_envs = value.get<std::size_t>();
    else if (key == "sigma_c") c.knobs.sigma_c = value.get<double>();
    else if (key == "sigma_b") c.knobs.sigma_b = value.get<double>();
    else if (key == "sigma_x") c.knobs.sigma_x = value.get<double>();
    else if (key == "sigma_y") c.knobs.sigma_y = value.get<double>();
    else if (key == "content_sep") c.knobs.content_sep = value.get<double>();
    else if (key == "bias_sep") c.knobs.bias_sep = value.get<double>();
    else if (key == "env_label_scale") c.knobs.env_label_scale = value.get<double>();
    else throw std::invalid_argument("config: unknown key \"" + key + "\"");
  }
  c.knobs.n_c = c.n_c;
  c.knobs.n_b = c.n_b;
  c.validate();
  return c;
}

json checkpoint_shell(const std::string& kind, const TrainConfig& config) {
  json j;
  j["format"] = "bagckpt";
  j["version"] = 1;
  j["kind"] = kind;
  j["config"] = config_to_json_obj(config);
  return j;
}

json parse_checkpoint(const std::string& path, const std::string& expected_kind) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint parse failure in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "bagckpt")
    throw std::runtime_error("not a bagckpt checkpoint: " + path);
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  if (!expected_kind.empty() && j.value("kind", "") != expected_kind)
    throw std::runtime_error("checkpoint kind mismatch in " + path);
  return j;
}

}  // namespace

void save_model(const BagModel& model, const TrainConfig& config, const std::string& path) {
  json j = checkpoint_shell("bag", config);
  j["n_c"] = model.vae.n_c;
  j["n_b"] = model.vae.n_b;
  j["beta"] = model.vae.beta;
  j["encoder"] = mlp_to_json(model.vae.encoder);
  j["decoder"] = mlp_to_json(model.vae.decoder);
  j["f_c"] = mlp_to_json(model.head.f_c);
  j["prior_logits"] = model.head.prior_logits;
  j["domain_classifier"] = mlp_to_json(model.head.domain_classifier);
  j["embed_rows"] = model.head.domain_embeddings.rows;
  j["embed_cols"] = model.head.domain_embeddings.cols;
  j["domain_embeddings"] = model.head.domain_embeddings.data;
  json experts = json::array();
  for (const Mlp& ex : model.head.experts) experts.push_back(mlp_to_json(ex));
  j["experts"] = experts;
  if (model.calib) {
    j["calib"] = {{"h0", model.calib->h0},
                  {"h1", model.calib->h1},
                  {"counts",
                   {model.calib->counts[0][0], model.calib->counts[0][1],
                    model.calib->counts[1][0], model.calib->counts[1][1]}}};
  }
  if (model.confusion) {
    j["confusion"] = {{"K", model.confusion->K},
                      {"eps", model.confusion->eps.data},
                      {"counts", model.confusion->counts.data}};
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failure on " + path);
}

LoadedModel load_model(const std::string& path) {
  const json j = parse_checkpoint(path, "bag");
  LoadedModel lm;
  lm.config = config_from_json_obj(j.at("config"));
  BagModel& m = lm.model;
  m.vae.n_c = j.at("n_c").get<std::size_t>();
  m.vae.n_b = j.at("n_b").get<std::size_t>();
  m.vae.beta = j.at("beta").get<double>();
  m.vae.encoder = mlp_from_json(j.at("encoder"));
  m.vae.decoder = mlp_from_json(j.at("decoder"));
  m.head.f_c = mlp_from_json(j.at("f_c"));
  m.head.prior_logits = j.at("prior_logits").get<std::vector<double>>();
  m.head.domain_classifier = mlp_from_json(j.at("domain_classifier"));
  m.head.domain_embeddings = Matrix(j.at("embed_rows").get<std::size_t>(),
                                    j.at("embed_cols").get<std::size_t>());
  const auto emb = j.at("domain_embeddings").get<std::vector<double>>();
  if (emb.size() != m.head.domain_embeddings.size())
    throw std::runtime_error("checkpoint: embedding array size mismatch");
  m.head.domain_embeddings.data = emb;
  for (const json& ex : j.at("experts")) m.head.experts.push_back(mlp_from_json(ex));
  if (j.contains("calib")) {
    calibrate::BinaryCalib c;
    c.h0 = j["calib"].at("h0").get<double>();
    c.h1 = j["calib"].at("h1").get<double>();
    const auto counts = j["calib"].at("counts").get<std::vector<std::int64_t>>();
    c.counts = {{{counts[0], counts[1]}, {counts[2], counts[3]}}};
    m.calib = c;
  }
  if (j.contains("confusion")) {
    calibrate::ConfusionMatrix cm;
    cm.K = j["confusion"].at("K").get<std::size_t>();
    cm.eps = Matrix(cm.K, cm.K);
    cm.eps.data = j["confusion"].at("eps").get<std::vector<double>>();
    cm.counts = Matrix(cm.K, cm.K);
    cm.counts.data = j["confusion"].at("counts").get<std::vector<double>>();
    m.confusion = cm;
  }
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("checkpoint: dimension chain violation: ") + e.what());
  }
  return lm;
}

void save_erm(const Mlp& net, const TrainConfig& config, const std::string& path) {
  json j = checkpoint_shell("erm", config);
  j["net"] = mlp_to_json(net);
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failure on " + path);
}

LoadedErm load_erm(const std::string& path) {
  const json j = parse_checkpoint(path, "erm");
  LoadedErm le;
  le.config = config_from_json_obj(j.at("config"));
  le.net = mlp_from_json(j.at("net"));
  return le;
}

bool checkpoint_is_erm(const std::string& path) {
  const json j = parse_checkpoint(path, "");
  return j.value("kind", "") == "erm";
}

TrainConfig read_config(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse failure in " + path + ": " + e.what());
  }
  return config_from_json_obj(j);
}

std::string config_to_json(const TrainConfig& config) {
  return config_to_json_obj(config).dump(2);
}

TrainConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config parse failure: ") + e.what());
  }
  return config_from_json_obj(j);
}

}  // namespace bag::io
