// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "dinmp/gradcheck.hpp"
#include "dinmp/ops.hpp"

namespace dinmp {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Σ out ⊙ probe, where probe is a fixed random projection.
double probe_loss(const Tensor& out, const Tensor& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
  return s;
}

TEST(RelativeError, UsesFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10), 1e-2);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
}

TEST(FiniteDiff, LinearModelIsExact) {
  std::mt19937_64 rng(1);
  const Tensor x = random_matrix(4, 6, rng), probe = random_matrix(4, 3, rng);
  const Mlp net("lin", {6, 3}, {Activation::identity});
  ParameterStore store;
  net.register_params(store, rng);
  store.value("lin/b0") = random_matrix(1, 3, rng);
  auto loss = [&] { return probe_loss(net.forward(store, x), probe); };
  auto grads = [&] {
    store.zero_grad();
    MlpCache cache;
    net.forward(store, x, &cache);
    net.backward(store, cache, probe);
  };
  // Central differences are exact for linear maps at any step; a wide step
  // keeps the loss roundoff well under the tolerance.
  const GradCheckReport r = finite_diff_check(loss, grads, store, {.step = 1e-3});
  EXPECT_LT(r.worst(), 1e-9);
  EXPECT_EQ(r.coords_checked.at("lin/w0"), 18u);
}

TEST(FiniteDiff, ThreeLayerMlp) {
  std::mt19937_64 rng(2);
  const Tensor x = random_matrix(5, 7, rng), probe = random_matrix(5, 2, rng);
  const Mlp net("m", {7, 9, 6, 2}, {Activation::relu, Activation::sigmoid, Activation::identity});
  ParameterStore store;
  net.register_params(store, rng);
  for (auto& [name, p] : store.entries()) {
    if (name.find("/b") != std::string::npos) p.value = random_matrix(1, p.value.cols(), rng);
  }
  auto loss = [&] { return probe_loss(net.forward(store, x), probe); };
  auto grads = [&] {
    store.zero_grad();
    MlpCache cache;
    net.forward(store, x, &cache);
    net.backward(store, cache, probe);
  };
  const GradCheckReport r = finite_diff_check(loss, grads, store);
  for (const auto& [name, err] : r.max_relative_error) EXPECT_LT(err, 1e-6) << name;
  for (const auto& [name, n] : r.coords_checked) {
    EXPECT_GE(n, std::min<std::size_t>(32, store.value(name).size())) << name;
  }
}

TEST(FiniteDiff, InputGradientOfMlp) {
  std::mt19937_64 rng(3);
  const Tensor probe = random_matrix(3, 2, rng);
  const Mlp net("m", {4, 5, 2}, {Activation::sigmoid, Activation::identity});
  ParameterStore store;
  net.register_params(store, rng);
  store.add("x", random_matrix(3, 4, rng));
  auto loss = [&] { return probe_loss(net.forward(store, store.value("x")), probe); };
  auto grads = [&] {
    store.zero_grad();
    MlpCache cache;
    net.forward(store, store.value("x"), &cache);
    store.grad("x") = net.backward(store, cache, probe);
  };
  EXPECT_LT(finite_diff_check(loss, grads, store).worst(), 1e-6);
}

TEST(FiniteDiff, ReluKinkIsNudged) {
  // relu(w·1 + b) with w + b = 0 puts the only coordinate exactly on the kink.
  ParameterStore store;
  store.add("w", Tensor::from_rows({{0.5}}));
  store.add("b", Tensor::from_rows({{-0.5}}));
  const Tensor x = Tensor::from_rows({{1.0}});
  auto forward = [&](MlpCache* cache) {
    const std::vector<LayerRef> layers = {{&store.value("w"), &store.value("b"), Activation::relu}};
    return mlp_forward(x, layers, cache);
  };
  auto loss = [&] { return forward(nullptr)[0]; };
  auto grads = [&] {
    store.zero_grad();
    MlpCache cache;
    forward(&cache);
    const std::vector<LayerRef> layers = {{&store.value("w"), &store.value("b"), Activation::relu}};
    const std::vector<LayerGrad> g = {{&store.grad("w"), &store.grad("b")}};
    mlp_backward(layers, g, cache, Tensor::from_rows({{1.0}}));
  };
  const GradCheckReport r = finite_diff_check(loss, grads, store);
  EXPECT_GT(r.nudged, 0u);
  EXPECT_LT(r.worst(), 1e-9);
  EXPECT_EQ(store.value("w")[0], 0.5);
  EXPECT_EQ(store.value("b")[0], -0.5);
}

TEST(FiniteDiff, SelfAttention) {
  std::mt19937_64 rng(4);
  ParameterStore store;
  store.add("x", random_matrix(4, 8, rng));
  for (const char* n : {"wq", "wk", "wv"}) store.add(n, random_matrix(8, 8, rng));
  const Tensor probe = random_matrix(4, 8, rng);
  auto loss = [&] {
    return probe_loss(self_attention_forward(store.value("x"), store.value("wq"), store.value("wk"), store.value("wv")),
                      probe);
  };
  auto grads = [&] {
    store.zero_grad();
    SelfAttentionCache cache;
    self_attention_forward(store.value("x"), store.value("wq"), store.value("wk"), store.value("wv"), &cache);
    store.grad("x") = self_attention_backward(cache, store.value("wq"), store.value("wk"), store.value("wv"), probe,
                                              store.grad("wq"), store.grad("wk"), store.grad("wv"));
  };
  const GradCheckReport r = finite_diff_check(loss, grads, store);
  for (const auto& [name, err] : r.max_relative_error) EXPECT_LT(err, 1e-6) << name;
}

TEST(FiniteDiff, LookupAndSegmentSumAreLinear) {
  std::mt19937_64 rng(5);
  ParameterStore store;
  store.add("table", random_matrix(6, 3, rng));
  const std::vector<std::int64_t> ids = {0, 2, 2, 5, 1};
  const std::vector<std::size_t> offsets = {0, 3, 3, 5};
  const Tensor probe = random_matrix(3, 3, rng);
  auto loss = [&] { return probe_loss(segment_sum(embedding_lookup(store.value("table"), ids), offsets), probe); };
  auto grads = [&] {
    store.zero_grad();
    embedding_lookup_backward(store.grad("table"), ids, segment_sum_backward(probe, offsets));
  };
  EXPECT_LT(finite_diff_check(loss, grads, store, {.step = 1e-3}).worst(), 1e-9);
}

TEST(FiniteDiff, DetectsWrongGradient) {
  ParameterStore store;
  store.add("w", Tensor::from_rows({{1.0, 2.0}}));
  auto loss = [&] { return store.value("w")[0] * store.value("w")[1]; };
  auto grads = [&] {
    store.zero_grad();
    store.grad("w")[0] = store.value("w")[1];
    store.grad("w")[1] = 0.0;  // wrong on purpose
  };
  const GradCheckReport r = finite_diff_check(loss, grads, store);
  EXPECT_GT(r.worst(), 0.5);
}

}  // namespace
}  // namespace dinmp
