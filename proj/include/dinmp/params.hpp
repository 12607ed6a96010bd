// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dinmp/tensor.hpp"

namespace dinmp {

struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

/// Named learnable tensors with their gradients and Adam moments. Iteration
/// order is lexicographic by name, which keeps initialization and update
/// order independent of registration order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor value) {
    if (params_.count(name)) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
    Parameter p;
    p.grad = Tensor(value.shape());
    p.first_moment = Tensor(value.shape());
    p.second_moment = Tensor(value.shape());
    p.value = std::move(value);
    return params_.emplace(name, std::move(p)).first->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return it->second;
  }
  const Parameter& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return it->second;
  }

  Tensor& value(const std::string& name) { return at(name).value; }
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(0.0);
  }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

 private:
  std::map<std::string, Parameter> params_;
  std::int64_t step_ = 0;
};

/// Uniform in [-1/sqrt(dim), 1/sqrt(dim)], the embedding initializer.
inline Tensor init_embedding(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::matrix(rows, dim);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

/// Glorot-uniform for dense weights.
inline Tensor init_glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::matrix(fan_in, fan_out);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update over every parameter, then zeroes the
/// gradients. Throws before touching any value if a gradient is non-finite.
inline void adam_step(ParameterStore& store, const AdamOptions& opt) {
  for (const auto& [name, p] : store.entries()) {
    if (!p.grad.all_finite()) throw std::runtime_error("adam_step: non-finite gradient in parameter '" + name + "'");
  }
  store.set_step(store.step() + 1);
  const double t = static_cast<double>(store.step());
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& [_, p] : store.entries()) {
    auto& w = p.value.values();
    auto& g = p.grad.values();
    auto& m = p.first_moment.values();
    auto& v = p.second_moment.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      if (opt.lr != 0.0) w[i] -= opt.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.epsilon);
      g[i] = 0.0;
    }
  }
}

}  // namespace dinmp
