#pragma once

#include <string>

#include "bag/config.hpp"
#include "bag/mlp.hpp"
#include "bag/model.hpp"
#include "bag/scm.hpp"

namespace bag::io {

// `bagset v1` text format: header line then CSV rows
// x_0,...,x_{nx-1},y,e[,c_*,b_*] with 17-significant-digit floats.
void write_dataset(const scm::LabeledDataset& ds, std::size_t n_c, std::size_t n_b,
                   const std::string& path);
scm::LabeledDataset read_dataset(const std::string& path, std::size_t* n_c_out = nullptr,
                                 std::size_t* n_b_out = nullptr);

// Versioned JSON checkpoint of a trained model plus the config echo.
void save_model(const BagModel& model, const TrainConfig& config, const std::string& path);
struct LoadedModel {
  BagModel model;
  TrainConfig config;
};
LoadedModel load_model(const std::string& path);

// Checkpoints for the ERM baseline share the container with kind = "erm".
void save_erm(const Mlp& net, const TrainConfig& config, const std::string& path);
struct LoadedErm {
  Mlp net;
  TrainConfig config;
};
LoadedErm load_erm(const std::string& path);

bool checkpoint_is_erm(const std::string& path);

// Flat JSON config; unknown keys are rejected.
TrainConfig read_config(const std::string& path);
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json_text(const std::string& text);

std::string format_double(double v);  // 17 significant digits

}  // namespace bag::io
