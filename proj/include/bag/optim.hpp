#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bag/mlp.hpp"

namespace bag {

// Named view into one parameter tensor of a model.
struct ParamView {
  std::string name;
  std::span<double> data;
};

std::vector<ParamView> param_views(Mlp& m, const std::string& prefix);

std::vector<double> flatten(const std::vector<ParamView>& views);
void unflatten(const std::vector<ParamView>& views, const std::vector<double>& flat);
std::size_t total_size(const std::vector<ParamView>& views);

// Bias-corrected adaptive moment estimation over a flat parameter vector.
struct OptimizerState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long step = 0;
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimizerState make_optimizer(std::size_t n_params, double step_size);

// In-place update; throws naming the offending index on non-finite gradients.
void optim_step(std::vector<double>& params, const std::vector<double>& grads,
                OptimizerState& state);

// Plain gradient descent step (used by test-time adaptation).
void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              double step_size);

// Central-difference gradient check. `f` evaluates the loss at the given flat
// parameters and, when the second argument is non-null, writes the analytic
// gradient. Returns max over coordinates of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(
    const std::function<double(const std::vector<double>&, std::vector<double>*)>& f,
    std::vector<double> params, double step = 1e-5);

}  // namespace bag
