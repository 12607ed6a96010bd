// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dinmp/params.hpp"
#include "dinmp/tensor.hpp"

namespace dinmp {

// ---------------------------------------------------------------------------
// Embedding lookup
// ---------------------------------------------------------------------------

/// Gathers table rows. Out-of-range ids throw; nothing is clamped.
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids) {
  const std::size_t dim = table.cols();
  const auto rows = static_cast<std::int64_t>(table.rows());
  Tensor out = Tensor::matrix(ids.size(), dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= rows) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) + " outside [0, " +
                              std::to_string(rows) + ")");
    }
    const double* src = table.data() + static_cast<std::size_t>(ids[i]) * dim;
    std::copy(src, src + dim, out.data() + i * dim);
  }
  return out;
}

/// Scatter-adds output gradients back into the table gradient; duplicate ids
/// accumulate.
inline void embedding_lookup_backward(Tensor& table_grad, std::span<const std::int64_t> ids, const Tensor& out_grad) {
  const std::size_t dim = table_grad.cols();
  detail::check(out_grad.rows() == ids.size() && (ids.empty() || out_grad.cols() == dim),
                "embedding_lookup_backward: gradient shape mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double* dst = table_grad.data() + static_cast<std::size_t>(ids[i]) * dim;
    const double* src = out_grad.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
  }
}

// ---------------------------------------------------------------------------
// Segment sum
// ---------------------------------------------------------------------------

inline void validate_offsets(std::span<const std::size_t> offsets, std::size_t n) {
  if (offsets.empty()) throw std::invalid_argument("segment offsets: empty offset array");
  if (offsets.front() != 0) throw std::invalid_argument("segment offsets: offsets[0] must be 0");
  if (offsets.back() != n) {
    throw std::invalid_argument("segment offsets: last offset " + std::to_string(offsets.back()) +
                                " does not equal row count " + std::to_string(n));
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] < offsets[i - 1]) throw std::invalid_argument("segment offsets: not nondecreasing");
  }
}

/// Row i of the result is the sum of value rows [offsets[i], offsets[i+1]).
inline Tensor segment_sum(const Tensor& values, std::span<const std::size_t> offsets) {
  validate_offsets(offsets, values.rows());
  const std::size_t b = offsets.size() - 1;
  const std::size_t d = values.cols();
  Tensor out = Tensor::matrix(b, d);
  for (std::size_t i = 0; i < b; ++i) {
    double* o = out.data() + i * d;
    for (std::size_t n = offsets[i]; n < offsets[i + 1]; ++n) {
      const double* v = values.data() + n * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += v[j];
    }
  }
  return out;
}

/// Broadcasts each output-gradient row over its segment.
inline Tensor segment_sum_backward(const Tensor& out_grad, std::span<const std::size_t> offsets) {
  const std::size_t d = out_grad.cols();
  Tensor in_grad = Tensor::matrix(offsets.back(), d);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    const double* g = out_grad.data() + i * d;
    for (std::size_t n = offsets[i]; n < offsets[i + 1]; ++n) std::copy(g, g + d, in_grad.data() + n * d);
  }
  return in_grad;
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

enum class Activation { identity, relu, sigmoid };

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct LayerRef {
  const Tensor* weight;  // d_in × d_out
  const Tensor* bias;    // 1 × d_out
  Activation activation;
};

struct LayerGrad {
  Tensor* weight;
  Tensor* bias;
};

struct MlpCache {
  std::vector<Tensor> inputs;   // input to each layer
  std::vector<Tensor> outputs;  // post-activation output of each layer
};

/// y = act(x·W + b) per layer. When `cache` is given every intermediate is kept
/// for mlp_backward.
inline Tensor mlp_forward(const Tensor& x, std::span<const LayerRef> layers, MlpCache* cache = nullptr) {
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerRef& layer = layers[l];
    if (h.cols() != layer.weight->rows() || layer.bias->size() != layer.weight->cols()) {
      throw std::invalid_argument("mlp_forward: layer " + std::to_string(l) + " expects input width " +
                                  std::to_string(layer.weight->rows()) + ", got " + std::to_string(h.cols()));
    }
    Tensor y = matmul(h, *layer.weight);
    const std::size_t m = y.cols();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double* r = y.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) {
        double v = r[j] + (*layer.bias)[j];
        switch (layer.activation) {
          case Activation::identity: break;
          case Activation::relu: v = v > 0.0 ? v : 0.0; break;
          case Activation::sigmoid: v = sigmoid(v); break;
        }
        r[j] = v;
      }
    }
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->outputs.push_back(y);
    }
    h = std::move(y);
  }
  return h;
}

/// Accumulates weight/bias gradients and returns dL/dx.
inline Tensor mlp_backward(std::span<const LayerRef> layers, std::span<const LayerGrad> grads, const MlpCache& cache,
                           const Tensor& out_grad) {
  Tensor g = out_grad;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Tensor& y = cache.outputs[l];
    const std::size_t m = y.cols();
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (layers[l].activation) {
        case Activation::identity: break;
        case Activation::relu: g[i] = y[i] > 0.0 ? g[i] : 0.0; break;
        case Activation::sigmoid: g[i] *= y[i] * (1.0 - y[i]); break;
      }
    }
    matmul_at_b_acc(cache.inputs[l], g, *grads[l].weight);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < m; ++j) (*grads[l].bias)[j] += g(i, j);
    }
    g = matmul_a_bt(g, *layers[l].weight);
  }
  return g;
}

/// An MLP whose weights live in a ParameterStore under `<prefix>/w<l>` and
/// `<prefix>/b<l>`.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, std::vector<std::size_t> widths, std::vector<Activation> activations)
      : prefix_(std::move(prefix)), widths_(std::move(widths)), activations_(std::move(activations)) {
    detail::check(widths_.size() >= 2, "Mlp: need at least input and output width");
    detail::check(activations_.size() + 1 == widths_.size(), "Mlp: one activation per layer");
  }

  void register_params(ParameterStore& store, std::mt19937_64& rng) const {
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      store.add(weight_name(l), init_glorot(widths_[l], widths_[l + 1], rng));
      store.add(bias_name(l), Tensor::matrix(1, widths_[l + 1]));
    }
  }

  Tensor forward(const ParameterStore& store, const Tensor& x, MlpCache* cache = nullptr) const {
    const auto refs = layer_refs(store);
    return mlp_forward(x, refs, cache);
  }

  Tensor backward(ParameterStore& store, const MlpCache& cache, const Tensor& out_grad) const {
    const auto refs = layer_refs(store);
    std::vector<LayerGrad> grads;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      grads.push_back({&store.grad(weight_name(l)), &store.grad(bias_name(l))});
    }
    return mlp_backward(refs, grads, cache, out_grad);
  }

  std::size_t num_layers() const { return widths_.empty() ? 0 : widths_.size() - 1; }
  std::string weight_name(std::size_t l) const { return prefix_ + "/w" + std::to_string(l); }
  std::string bias_name(std::size_t l) const { return prefix_ + "/b" + std::to_string(l); }

 private:
  std::vector<LayerRef> layer_refs(const ParameterStore& store) const {
    std::vector<LayerRef> refs;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      refs.push_back({&store.value(weight_name(l)), &store.value(bias_name(l)), activations_[l]});
    }
    return refs;
  }

  std::string prefix_;
  std::vector<std::size_t> widths_;
  std::vector<Activation> activations_;
};

// ---------------------------------------------------------------------------
// Single-head self-attention with residual: x + softmax(QKᵀ/√d)·V
// ---------------------------------------------------------------------------

struct SelfAttentionCache {
  Tensor x, q, k, v, probs;
};

inline Tensor self_attention_forward(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                                     SelfAttentionCache* cache = nullptr) {
  const std::size_t d = x.cols();
  if (d == 0) throw std::invalid_argument("self_attention: model dimension is 0");
  detail::check(x.rows() >= 1, "self_attention: need at least one position");
  detail::check(wq.rows() == d && wq.cols() == d && wk.same_shape(wq) && wv.same_shape(wq),
                "self_attention: projections must be d×d");
  const std::size_t t = x.rows();
  Tensor q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
  Tensor probs = matmul_a_bt(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < t; ++i) {
    auto r = probs.row(i);
    double mx = -INFINITY;
    for (auto& s : r) {
      s *= scale;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (auto& s : r) {
      s = std::exp(s - mx);
      z += s;
    }
    for (auto& s : r) s /= z;
  }
  Tensor out = matmul(probs, v);
  add_inplace(out, x);
  if (cache) *cache = {x, std::move(q), std::move(k), std::move(v), std::move(probs)};
  return out;
}

/// Returns dL/dx and accumulates projection gradients.
inline Tensor self_attention_backward(const SelfAttentionCache& c, const Tensor& wq, const Tensor& wk,
                                      const Tensor& wv, const Tensor& out_grad, Tensor& dwq, Tensor& dwk,
                                      Tensor& dwv) {
  const std::size_t t = c.x.rows(), d = c.x.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor dprobs = matmul_a_bt(out_grad, c.v);  // t×t
  Tensor dv = Tensor::matrix(t, d);
  matmul_at_b_acc(c.probs, out_grad, dv);
  Tensor dscores = Tensor::matrix(t, t);
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t; ++j) s += dprobs(i, j) * c.probs(i, j);
    for (std::size_t j = 0; j < t; ++j) dscores(i, j) = c.probs(i, j) * (dprobs(i, j) - s) * scale;
  }
  Tensor dq = matmul(dscores, c.k);
  Tensor dk = Tensor::matrix(t, d);
  matmul_at_b_acc(dscores, c.q, dk);
  matmul_at_b_acc(c.x, dq, dwq);
  matmul_at_b_acc(c.x, dk, dwk);
  matmul_at_b_acc(c.x, dv, dwv);
  Tensor dx = out_grad;
  add_inplace(dx, matmul_a_bt(dq, wq));
  add_inplace(dx, matmul_a_bt(dk, wk));
  add_inplace(dx, matmul_a_bt(dv, wv));
  return dx;
}

}  // namespace dinmp
