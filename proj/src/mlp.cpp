#include "bag/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "bag/mathfn.hpp"

namespace bag {

std::string act_name(Act a) {
  switch (a) {
    case Act::identity: return "identity";
    case Act::relu: return "relu";
    case Act::tanh: return "tanh";
    case Act::sigmoid: return "sigmoid";
    case Act::softmax: return "softmax";
  }
  return "identity";
}

Act act_from_name(const std::string& name) {
  if (name == "identity") return Act::identity;
  if (name == "relu") return Act::relu;
  if (name == "tanh") return Act::tanh;
  if (name == "sigmoid") return Act::sigmoid;
  if (name == "softmax") return Act::softmax;
  throw std::invalid_argument("unknown activation: " + name);
}

void Mlp::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    require(l.W.rows == l.b.size(), "mlp: bias width does not match weight rows");
    if (i + 1 < layers.size()) {
      require(layers[i + 1].W.cols == l.W.rows, "mlp: adjacent layer dims do not chain");
      require(l.act != Act::softmax, "mlp: softmax only allowed on the final layer");
    }
  }
}

Mlp make_mlp(const std::vector<std::size_t>& dims, const std::vector<Act>& acts,
             Rng& rng, double init_scale) {
  require(dims.size() >= 2, "make_mlp: need at least one layer");
  require(acts.size() == dims.size() - 1, "make_mlp: one activation per layer");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer l;
    const double scale =
        init_scale > 0.0 ? init_scale : std::sqrt(2.0 / static_cast<double>(dims[i] + dims[i + 1]));
    l.W = Matrix::gaussian(dims[i + 1], dims[i], rng, scale);
    l.b.assign(dims[i + 1], 0.0);
    l.act = acts[i];
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

Mlp zeros_like(const Mlp& m) {
  Mlp z;
  for (const Layer& l : m.layers) {
    Layer zl;
    zl.W = Matrix(l.W.rows, l.W.cols);
    zl.b.assign(l.b.size(), 0.0);
    zl.act = l.act;
    z.layers.push_back(std::move(zl));
  }
  return z;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const double* lr = logits.row(i);
    double mx = lr[0];
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, lr[j]);
    double sum = 0.0;
    double* orow = out.row(i);
    for (std::size_t j = 0; j < logits.cols; ++j) {
      orow[j] = std::exp(lr[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < logits.cols; ++j) orow[j] /= sum;
  }
  return out;
}

Matrix softmax_backward_rows(const Matrix& probs, const Matrix& dProbs) {
  require(probs.same_shape(dProbs), "softmax_backward: shape mismatch");
  Matrix dLogits(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* p = probs.row(i);
    const double* g = dProbs.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < probs.cols; ++j) dot += p[j] * g[j];
    double* o = dLogits.row(i);
    for (std::size_t j = 0; j < probs.cols; ++j) o[j] = p[j] * (g[j] - dot);
  }
  return dLogits;
}

namespace {

void apply_activation(Act act, Matrix& z, Matrix* pre_relu) {
  switch (act) {
    case Act::identity:
      break;
    case Act::relu:
      if (pre_relu) *pre_relu = z;
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
      break;
    case Act::tanh:
      for (double& v : z.data) v = std::tanh(v);
      break;
    case Act::sigmoid:
      for (double& v : z.data) v = sigmoid(v);
      break;
    case Act::softmax:
      z = softmax_rows(z);
      break;
  }
}

}  // namespace

Matrix mlp_forward(const Mlp& m, const Matrix& X, MlpCache* cache) {
  require(!m.layers.empty(), "mlp_forward: empty network");
  require(X.cols == m.in_dim(), "mlp_forward: input width does not match first layer");
  if (cache) {
    cache->input = X;
    cache->post.clear();
    cache->pre_relu.assign(m.layers.size(), Matrix());
  }
  Matrix h = X;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& l = m.layers[li];
    Matrix z = matmul_nt(h, l.W);
    for (std::size_t i = 0; i < z.rows; ++i) {
      double* zr = z.row(i);
      for (std::size_t j = 0; j < z.cols; ++j) zr[j] += l.b[j];
    }
    apply_activation(l.act, z, cache ? &cache->pre_relu[li] : nullptr);
    if (cache) cache->post.push_back(z);
    h = std::move(z);
  }
  return h;
}

Matrix mlp_backward(const Mlp& m, const MlpCache& cache, const Matrix& dY, Mlp& grad) {
  require(grad.layers.size() == m.layers.size(), "mlp_backward: grad shape mismatch");
  require(cache.post.size() == m.layers.size(), "mlp_backward: cache does not match network");
  Matrix d = dY;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const Layer& l = m.layers[li];
    const Matrix& out = cache.post[li];
    require(d.same_shape(out), "mlp_backward: upstream gradient shape mismatch");
    Matrix dz;
    switch (l.act) {
      case Act::identity:
        dz = std::move(d);
        break;
      case Act::relu: {
        dz = d;
        const Matrix& pre = cache.pre_relu[li];
        for (std::size_t i = 0; i < dz.size(); ++i)
          if (pre.data[i] <= 0.0) dz.data[i] = 0.0;
        break;
      }
      case Act::tanh: {
        dz = d;
        for (std::size_t i = 0; i < dz.size(); ++i)
          dz.data[i] *= 1.0 - out.data[i] * out.data[i];
        break;
      }
      case Act::sigmoid: {
        dz = d;
        for (std::size_t i = 0; i < dz.size(); ++i)
          dz.data[i] *= out.data[i] * (1.0 - out.data[i]);
        break;
      }
      case Act::softmax:
        dz = softmax_backward_rows(out, d);
        break;
    }
    const Matrix& in = li == 0 ? cache.input : cache.post[li - 1];
    // dW += dz^T * in; db += column sums of dz
    Matrix dW = matmul_tn(dz, in);
    Layer& gl = grad.layers[li];
    for (std::size_t i = 0; i < dW.size(); ++i) gl.W.data[i] += dW.data[i];
    for (std::size_t i = 0; i < dz.rows; ++i) {
      const double* zr = dz.row(i);
      for (std::size_t j = 0; j < dz.cols; ++j) gl.b[j] += zr[j];
    }
    d = matmul(dz, l.W);
  }
  return d;
}

}  // namespace bag
