#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rcav/tensor.hpp"

namespace rcav::nn {

// weight [out_ch, in_ch, kernel, kernel], bias [out_ch]
struct Conv2d {
  std::size_t kernel = 3;
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  Tensor weight;
  Tensor bias;
};

struct Relu {};

// Non-overlapping window x window pooling.
struct MaxPool {
  std::size_t window = 2;
};

struct GlobalAvgPool {};

// weight [out, in], bias [out]
struct Dense {
  std::size_t in = 1;
  std::size_t out = 1;
  Tensor weight;
  Tensor bias;
};

struct Flatten {};

using LayerKind = std::variant<Conv2d, Relu, MaxPool, GlobalAvgPool, Dense, Flatten>;

struct LayerSpec {
  std::string name;
  LayerKind kind;
};

std::string kind_name(const LayerKind& kind);

// Per-sample output shape for a per-sample input shape; DimensionError when
// the layer cannot accept `in`.
Shape output_shape(const LayerKind& kind, const Shape& in);

// Gradients of one layer's parameters, same shapes as the parameters.
struct LayerGrads {
  Tensor weight;
  Tensor bias;
};

// Batched evaluation: `in` is [batch, ...per-sample shape].
Tensor layer_forward(const LayerKind& kind, const Tensor& in);

// Returns dL/d(in). When `grads` is non-null, parameter gradients are added
// into it (zero-initialised by the caller).
Tensor layer_backward(const LayerKind& kind, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                      LayerGrads* grads);

bool has_parameters(const LayerKind& kind);

// A feed-forward network ending in a dense head whose softmax gives class
// scores. Evaluation can stop after a named probe layer and resume from it;
// both halves run the same per-layer code, so the composition is exact.
class Model {
 public:
  Model() = default;
  Model(Shape input_shape, std::vector<LayerSpec> layers, std::size_t class_count,
        std::vector<std::string> probe_layers);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<LayerSpec>& mutable_layers() { return layers_; }
  std::size_t class_count() const { return class_count_; }
  const std::vector<std::string>& probe_layers() const { return probe_layers_; }

  std::size_t layer_index(std::string_view name) const;  // LookupError if absent
  bool is_probe(std::string_view name) const;
  // Per-sample output shape of a layer.
  const Shape& layer_shape(std::string_view name) const;
  std::size_t activation_size(std::string_view name) const;

  Tensor logits(const Tensor& x) const;
  Tensor forward_full(const Tensor& x) const;  // softmax rows [batch, classes]

  // f_l: activations of probe layer `layer`, shape [batch, ...layer shape].
  Tensor forward_to(std::string_view layer, const Tensor& x) const;
  // f_l^+: softmax scores from activations of `layer`; `h` may be
  // [batch, ...layer shape] or flattened [batch, activation_size].
  Tensor forward_from(std::string_view layer, const Tensor& h) const;
  Tensor logits_from(std::string_view layer, const Tensor& h) const;

  // d softmax_k / d h, same shape as the (batched) h.
  Tensor grad_wrt_activation(std::string_view layer, const Tensor& h, std::size_t class_k) const;

  // Runs layers [begin, end) on a batch.
  Tensor run(std::size_t begin, std::size_t end, Tensor x) const;

 private:
  Tensor batched_input(const Tensor& x) const;
  Tensor batched_activation(std::string_view layer, const Tensor& h) const;
  std::size_t probe_index(std::string_view layer) const;

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;  // output shape per layer
  std::size_t class_count_ = 0;
  std::vector<std::string> probe_layers_;
};

// conv3x3(8) relu maxpool2 conv3x3(16) relu maxpool2 conv3x3(32) relu gap dense(k),
// He-normal weights from `seed`. Probe layers: pool1 relu2 pool2 relu3 gap.
Model small_net(std::size_t channels, std::size_t height, std::size_t width, std::size_t classes,
                std::uint64_t seed);

}  // namespace rcav::nn
