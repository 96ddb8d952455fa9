#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rcav/checkpoint.hpp"
#include "rcav/errors.hpp"
#include "rcav/nn.hpp"
#include "rcav/train.hpp"

using rcav::Tensor;
using namespace rcav::nn;

namespace {

Model identity_head_model() {
  Dense fc;
  fc.in = 2;
  fc.out = 2;
  fc.weight = Tensor::identity(2);
  fc.bias = Tensor({2});
  return Model({2}, {{"h", Flatten{}}, {"fc", fc}}, 2, {"h"});
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

rcav::Dataset separable_toy(std::size_t per_class, std::uint64_t seed) {
  rcav::Dataset d;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(0.0f, 0.3f);
  const std::size_t n = 2 * per_class;
  d.images = Tensor({n, 1, 16, 16});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    d.labels.push_back(label);
    auto img = d.images.row(i);
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) {
        const bool lit = label == 0 ? c < 8 : c >= 8;
        img[r * 16 + c] = (lit ? 0.7f : 0.0f) + noise(rng);
      }
  }
  d.class_count = 2;
  d.class_names = {"left", "right"};
  return d;
}

}  // namespace

TEST(Model, ProbeSplitComposesExactly) {
  auto model = small_net(1, 16, 16, 3, 5);
  auto x = oracle::random_tensor({4, 1, 16, 16}, 1, 0.0f, 1.0f);
  auto full = model.forward_full(x);
  for (const auto& layer : model.probe_layers()) {
    auto h = model.forward_to(layer, x);
    EXPECT_EQ(model.forward_from(layer, h), full) << layer;
    EXPECT_EQ(model.forward_from(layer, h.reshaped({4, model.activation_size(layer)})), full) << layer;
  }
}

TEST(Model, MatchesNaiveForward) {
  auto model = small_net(1, 16, 16, 2, 9);
  auto x = oracle::random_tensor({4, 1, 16, 16}, 2, 0.0f, 1.0f);
  auto logits = model.logits(x);
  for (std::size_t i = 0; i < 4; ++i) {
    auto want = oracle::forward(model, 0, model.layers().size(), to_double(x.row(i)), {1, 16, 16});
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(logits.at(i, k), want[k], 1e-5);
  }
}

TEST(Model, IdentityConvKernel) {
  Conv2d c;
  c.kernel = 1;
  c.weight = Tensor::filled({1, 1, 1, 1}, 1.0f);
  c.bias = Tensor({1});
  auto x = oracle::random_tensor({2, 1, 5, 5}, 3);
  EXPECT_EQ(layer_forward(c, x), x);
}

TEST(Model, IdentityDenseHead) {
  auto m = identity_head_model();
  auto p0 = m.forward_from("h", Tensor::matrix(1, 2, {0, 0}));
  EXPECT_EQ(p0.at(0, 0), 0.5f);
  EXPECT_EQ(p0.at(0, 1), 0.5f);
  auto p1 = m.forward_from("h", Tensor::matrix(1, 2, {1, 0}));
  EXPECT_NEAR(p1.at(0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(p1.at(0, 1), 0.2689, 1e-4);
}

TEST(Model, UnknownLayerAndBadShapes) {
  auto model = small_net(1, 16, 16, 2, 1);
  EXPECT_THROW(model.forward_to("nope", Tensor({1, 1, 16, 16})), rcav::LookupError);
  EXPECT_THROW(model.forward_full(Tensor({1, 1, 8, 8})), rcav::DimensionError);
  EXPECT_THROW(output_shape(MaxPool{4}, {1, 2, 2}), rcav::DimensionError);
}

TEST(Gradient, MatchesFiniteDifferences) {
  auto model = small_net(1, 16, 16, 3, 21);
  const auto& layers = model.probe_layers();
  std::mt19937_64 rng(4);
  const double eps = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    const auto& layer = layers[trial % layers.size()];
    const std::size_t k = rng() % 3;
    // Continuous random activations avoid the ties (zeros in a pooling
    // window) where the head is not differentiable; coordinates whose
    // +-eps step crosses a ReLU or pooling switch are skipped below.
    rcav::Shape hs{1};
    for (auto d : model.layer_shape(layer)) hs.push_back(d);
    auto h = oracle::random_tensor(hs, 100 + trial, 0.0f, 1.0f);
    auto g = model.grad_wrt_activation(layer, h, k);
    const std::size_t begin = model.layer_index(layer) + 1;
    const auto& shape = model.layer_shape(layer);
    auto head = [&](std::vector<double> v, std::vector<int>* pattern) {
      return oracle::softmax(oracle::forward(model, begin, model.layers().size(), std::move(v), shape, pattern))[k];
    };
    auto base = to_double(h.data());
    std::vector<int> base_pattern;
    head(base, &base_pattern);
    std::vector<double> fd, analytic, diff;
    for (std::size_t j = 0; j < base.size(); ++j) {
      auto up = base, down = base;
      up[j] += eps;
      down[j] -= eps;
      std::vector<int> pu, pd;
      const double f_up = head(up, &pu), f_down = head(down, &pd);
      if (pu != base_pattern || pd != base_pattern) continue;
      fd.push_back((f_up - f_down) / (2 * eps));
      analytic.push_back(g[j]);
      diff.push_back(fd.back() - g[j]);
    }
    ASSERT_GT(fd.size(), base.size() * 9 / 10);
    const double scale = std::max(norm(fd), norm(analytic));
    ASSERT_GT(scale, 0.0);
    EXPECT_LE(norm(diff) / scale, 1e-3) << layer << " k=" << k;
  }
}

TEST(Gradient, ConstantHeadGivesZero) {
  auto model = small_net(1, 16, 16, 2, 3);
  for (auto& spec : model.mutable_layers()) {
    if (auto* d = std::get_if<Dense>(&spec.kind)) d->weight = Tensor(d->weight.shape());
  }
  auto x = oracle::random_tensor({2, 1, 16, 16}, 5, 0.0f, 1.0f);
  for (const auto& layer : model.probe_layers()) {
    auto g = model.grad_wrt_activation(layer, model.forward_to(layer, x), 0);
    for (float v : g.data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Gradient, SumOverClassesVanishes) {
  auto model = small_net(1, 16, 16, 4, 8);
  auto x = oracle::random_tensor({3, 1, 16, 16}, 6, 0.0f, 1.0f);
  for (const auto& layer : model.probe_layers()) {
    auto h = model.forward_to(layer, x);
    std::vector<double> total(h.size(), 0.0);
    for (std::size_t k = 0; k < 4; ++k) {
      auto g = model.grad_wrt_activation(layer, h, k);
      for (std::size_t i = 0; i < g.size(); ++i) total[i] += g[i];
    }
    for (double v : total) EXPECT_NEAR(v, 0.0, 1e-5);
  }
}

// Backward of every layer kind against central differences of the naive
// forward, with loss L = <g_out, layer(in)>.
TEST(Gradient, LayerBackwardMatchesFiniteDifferences) {
  auto model = small_net(2, 8, 8, 3, 13);
  std::vector<LayerKind> kinds;
  for (const auto& l : model.layers()) kinds.push_back(l.kind);
  rcav::Shape in_shape{2, 8, 8};
  for (const auto& kind : kinds) {
    auto out_shape = output_shape(kind, in_shape);
    rcav::Shape batched{1};
    batched.insert(batched.end(), in_shape.begin(), in_shape.end());
    auto in = oracle::random_tensor(batched, 31, 0.05f, 1.0f);
    auto out = layer_forward(kind, in);
    auto gout = oracle::random_tensor(out.shape(), 32);
    LayerGrads grads;
    if (has_parameters(kind)) {
      std::visit([&](const auto& l) {
        if constexpr (requires { l.weight; }) {
          grads.weight = Tensor(l.weight.shape());
          grads.bias = Tensor(l.bias.shape());
        }
      }, kind);
    }
    auto gin = layer_backward(kind, in, out, gout, has_parameters(kind) ? &grads : nullptr);
    auto loss = [&](const LayerKind& k, std::vector<double> x) {
      oracle::Act a;
      a.c = in_shape.size() == 3 ? in_shape[0] : x.size();
      a.h = in_shape.size() == 3 ? in_shape[1] : 1;
      a.w = in_shape.size() == 3 ? in_shape[2] : 1;
      a.v = std::move(x);
      auto o = oracle::layer(k, a).v;
      double s = 0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * gout[i];
      return s;
    };
    const double eps = 1e-4;
    auto base = to_double(in.data());
    for (std::size_t j = 0; j < base.size(); j += 7) {
      auto up = base, down = base;
      up[j] += eps;
      down[j] -= eps;
      EXPECT_NEAR(gin[j], (loss(kind, up) - loss(kind, down)) / (2 * eps), 1e-3) << kind_name(kind) << " j=" << j;
    }
    if (auto* d = std::get_if<Dense>(&kind)) {
      for (std::size_t j = 0; j < d->weight.size(); j += 5) {
        Dense up = *d, down = *d;
        up.weight[j] += float(eps);
        down.weight[j] -= float(eps);
        const double step = double(up.weight[j]) - down.weight[j];
        EXPECT_NEAR(grads.weight[j], (loss(up, base) - loss(down, base)) / step, 2e-3);
      }
    }
    if (auto* c = std::get_if<Conv2d>(&kind)) {
      for (std::size_t j = 0; j < c->weight.size(); j += 11) {
        Conv2d up = *c, down = *c;
        up.weight[j] += 1e-2f;
        down.weight[j] -= 1e-2f;
        const double step = double(up.weight[j]) - down.weight[j];
        EXPECT_NEAR(grads.weight[j], (loss(up, base) - loss(down, base)) / step, 2e-3);
      }
      for (std::size_t j = 0; j < c->bias.size(); ++j) {
        Conv2d up = *c, down = *c;
        up.bias[j] += 1e-2f;
        down.bias[j] -= 1e-2f;
        const double step = double(up.bias[j]) - down.bias[j];
        EXPECT_NEAR(grads.bias[j], (loss(up, base) - loss(down, base)) / step, 2e-3);
      }
    }
    in_shape = out_shape;
  }
}

TEST(Training, MixupDisabledGivesPlainBatches) {
  auto data = separable_toy(8, 1);
  std::vector<std::size_t> idx{3, 0, 5, 9};
  std::mt19937_64 rng(7), untouched(7);
  auto b = make_batch(data, idx, 0.0, rng);
  EXPECT_EQ(rng, untouched);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EXPECT_TRUE(std::equal(b.images.row(i).begin(), b.images.row(i).end(), data.images.row(idx[i]).begin()));
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(b.targets.at(i, k), k == data.labels[idx[i]] ? 1.0f : 0.0f);
  }
}

TEST(Training, MixupTargetsStayDistributions) {
  auto data = separable_toy(8, 2);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
  std::mt19937_64 rng(3);
  auto b = make_batch(data, idx, 0.4, rng);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EXPECT_NEAR(b.targets.at(i, 0) + b.targets.at(i, 1), 1.0f, 1e-6);
  }
}

TEST(Training, SeparableToyReachesFullAccuracy) {
  auto data = separable_toy(100, 3);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 11;
  auto result = train(small_net(1, 16, 16, 2, 4), data, cfg);
  EXPECT_GE(accuracy(result.model, data), 0.99);
  for (double l : result.step_losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Training, BitwiseDeterministic) {
  auto data = separable_toy(20, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  auto init = small_net(1, 16, 16, 2, 6);
  auto a = train(init, data, cfg), b = train(init, data, cfg);
  EXPECT_EQ(a.step_losses, b.step_losses);
  auto x = data.images.slice_rows(0, 4);
  EXPECT_EQ(a.model.logits(x), b.model.logits(x));
  cfg.seed = 6;
  auto c = train(init, data, cfg);
  EXPECT_NE(a.step_losses, c.step_losses);
}

TEST(Training, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), rcav::ConfigError);
  cfg = {};
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), rcav::ConfigError);
}

TEST(Checkpoint, RoundTripAndTamperDetection) {
  auto dir = std::filesystem::temp_directory_path() / "rcav_ckpt_test";
  std::filesystem::remove_all(dir);
  auto model = small_net(1, 16, 16, 2, 77);
  save_checkpoint(model, dir, {{"note", "x"}});
  auto loaded = load_checkpoint(dir);
  auto x = oracle::random_tensor({2, 1, 16, 16}, 1, 0.0f, 1.0f);
  EXPECT_EQ(loaded.logits(x), model.logits(x));
  EXPECT_EQ(loaded.probe_layers(), model.probe_layers());
  EXPECT_EQ(read_manifest(dir)["extra"]["note"], "x");

  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".rcvt") {
      std::fstream f(entry.path(), std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(-1, std::ios::end);
      f.put('\x7f');
      break;
    }
  }
  EXPECT_THROW(load_checkpoint(dir), rcav::FormatError);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_checkpoint(dir), rcav::MissingArtifactError);
}
