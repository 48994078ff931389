#include "bag/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace bag {

std::vector<ParamView> param_views(Mlp& m, const std::string& prefix) {
  std::vector<ParamView> views;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    Layer& l = m.layers[i];
    views.push_back({prefix + ".layer" + std::to_string(i) + ".W",
                     std::span<double>(l.W.data)});
    views.push_back({prefix + ".layer" + std::to_string(i) + ".b",
                     std::span<double>(l.b)});
  }
  return views;
}

std::size_t total_size(const std::vector<ParamView>& views) {
  std::size_t n = 0;
  for (const ParamView& v : views) n += v.data.size();
  return n;
}

std::vector<double> flatten(const std::vector<ParamView>& views) {
  std::vector<double> flat;
  flat.reserve(total_size(views));
  for (const ParamView& v : views) flat.insert(flat.end(), v.data.begin(), v.data.end());
  return flat;
}

void unflatten(const std::vector<ParamView>& views, const std::vector<double>& flat) {
  if (flat.size() != total_size(views))
    throw std::invalid_argument("unflatten: size mismatch");
  std::size_t off = 0;
  for (const ParamView& v : views) {
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = flat[off + i];
    off += v.data.size();
  }
}

OptimizerState make_optimizer(std::size_t n_params, double step_size) {
  OptimizerState s;
  s.m.assign(n_params, 0.0);
  s.v.assign(n_params, 0.0);
  s.step_size = step_size;
  return s;
}

void optim_step(std::vector<double>& params, const std::vector<double>& grads,
                OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("optim_step: shape mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g))
      throw std::runtime_error("optim_step: non-finite gradient at parameter index " +
                               std::to_string(i));
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.step_size * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              double step_size) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw std::runtime_error("sgd_step: non-finite gradient at parameter index " +
                               std::to_string(i));
    params[i] -= step_size * grads[i];
  }
}

double grad_check(
    const std::function<double(const std::vector<double>&, std::vector<double>*)>& f,
    std::vector<double> params, double step) {
  std::vector<double> analytic(params.size(), 0.0);
  const double base = f(params, &analytic);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");
  double max_err = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double hi = f(params, nullptr);
    params[i] = saved - step;
    const double lo = f(params, nullptr);
    params[i] = saved;
    if (!std::isfinite(hi) || !std::isfinite(lo))
      throw std::runtime_error("grad_check: non-finite loss during perturbation");
    const double numeric = (hi - lo) / (2.0 * step);
    const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
    max_err = std::max(max_err, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_err;
}

}  // namespace bag
