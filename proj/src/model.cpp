#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "rcav/errors.hpp"
#include "rcav/linalg.hpp"
#include "rcav/nn.hpp"

namespace rcav::nn {

namespace {

void check_param(const Tensor& t, const Shape& want, const std::string& what) {
  if (t.shape() != want) {
    throw DimensionError(what + " has shape " + shape_string(t.shape()) + ", expected " + shape_string(want));
  }
}

}  // namespace

Model::Model(Shape input_shape, std::vector<LayerSpec> layers, std::size_t class_count,
             std::vector<std::string> probe_layers)
    : input_shape_(std::move(input_shape)),
      layers_(std::move(layers)),
      class_count_(class_count),
      probe_layers_(std::move(probe_layers)) {
  if (class_count_ < 2) throw ConfigError("model needs class_count >= 2");
  if (layers_.empty()) throw ConfigError("model has no layers");
  std::set<std::string> names;
  Shape shape = input_shape_;
  for (const auto& layer : layers_) {
    if (layer.name.empty()) throw ConfigError("layer with empty name");
    if (!names.insert(layer.name).second) throw ConfigError("duplicate layer name: " + layer.name);
    if (const auto* c = std::get_if<Conv2d>(&layer.kind)) {
      check_param(c->weight, {c->out_ch, c->in_ch, c->kernel, c->kernel}, layer.name + ".weight");
      check_param(c->bias, {c->out_ch}, layer.name + ".bias");
      if (c->stride == 0) throw ConfigError(layer.name + ": stride must be positive");
    } else if (const auto* d = std::get_if<Dense>(&layer.kind)) {
      check_param(d->weight, {d->out, d->in}, layer.name + ".weight");
      check_param(d->bias, {d->out}, layer.name + ".bias");
    }
    shape = output_shape(layer.kind, shape);
    shapes_.push_back(shape);
  }
  const auto* head = std::get_if<Dense>(&layers_.back().kind);
  if (!head || head->out != class_count_) {
    throw ConfigError("final layer must be dense with class_count outputs");
  }
  for (const auto& p : probe_layers_) {
    if (!names.count(p)) throw ConfigError("probe layer not in model: " + p);
  }
}

std::size_t Model::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  throw LookupError("unknown layer: " + std::string(name));
}

bool Model::is_probe(std::string_view name) const {
  return std::find(probe_layers_.begin(), probe_layers_.end(), name) != probe_layers_.end();
}

std::size_t Model::probe_index(std::string_view layer) const {
  if (!is_probe(layer)) throw LookupError("not a probe layer: " + std::string(layer));
  return layer_index(layer);
}

const Shape& Model::layer_shape(std::string_view name) const { return shapes_[layer_index(name)]; }

std::size_t Model::activation_size(std::string_view name) const { return shape_size(layer_shape(name)); }

Tensor Model::run(std::size_t begin, std::size_t end, Tensor x) const {
  for (std::size_t i = begin; i < end; ++i) x = layer_forward(layers_[i].kind, x);
  return x;
}

Tensor Model::batched_input(const Tensor& x) const {
  if (x.shape() == input_shape_) {
    Shape s{1};
    s.insert(s.end(), input_shape_.begin(), input_shape_.end());
    return x.reshaped(std::move(s));
  }
  if (x.rank() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    throw DimensionError("model input must be [batch," + shape_string(input_shape_).substr(1) + ", got " +
                         shape_string(x.shape()));
  }
  return x;
}

Tensor Model::batched_activation(std::string_view layer, const Tensor& h) const {
  const Shape& s = layer_shape(layer);
  const std::size_t n = shape_size(s);
  if (h.rank() < 2 || h.row_size() != n) {
    throw DimensionError("activation for layer " + std::string(layer) + " must be [batch," + std::to_string(n) +
                         "] or [batch," + shape_string(s).substr(1) + ", got " + shape_string(h.shape()));
  }
  Shape full{h.dim(0)};
  full.insert(full.end(), s.begin(), s.end());
  return h.shape() == full ? h : h.reshaped(std::move(full));
}

Tensor Model::logits(const Tensor& x) const {
  Tensor out = run(0, layers_.size(), batched_input(x));
  out.check_finite("Model::logits");
  return out;
}

Tensor Model::forward_full(const Tensor& x) const { return softmax_rows(logits(x)); }

Tensor Model::forward_to(std::string_view layer, const Tensor& x) const {
  const auto idx = probe_index(layer);
  Tensor out = run(0, idx + 1, batched_input(x));
  out.check_finite("Model::forward_to");
  return out;
}

Tensor Model::logits_from(std::string_view layer, const Tensor& h) const {
  const auto idx = probe_index(layer);
  Tensor out = run(idx + 1, layers_.size(), batched_activation(layer, h));
  out.check_finite("Model::logits_from");
  return out;
}

Tensor Model::forward_from(std::string_view layer, const Tensor& h) const { return softmax_rows(logits_from(layer, h)); }

Tensor Model::grad_wrt_activation(std::string_view layer, const Tensor& h, std::size_t class_k) const {
  if (class_k >= class_count_) throw IndexError("class index " + std::to_string(class_k) + " out of range");
  const auto idx = probe_index(layer);
  std::vector<Tensor> acts;
  acts.push_back(batched_activation(layer, h));
  for (std::size_t i = idx + 1; i < layers_.size(); ++i) acts.push_back(layer_forward(layers_[i].kind, acts.back()));
  const Tensor& z = acts.back();
  Tensor grad(z.shape());
  for (std::size_t b = 0; b < z.dim(0); ++b) {
    // d p_k / d z_j = p_k (delta_kj - p_j)
    const auto row = z.row(b);
    const float mx = *std::max_element(row.begin(), row.end());
    std::vector<double> p(class_count_);
    double total = 0.0;
    for (std::size_t j = 0; j < class_count_; ++j) total += p[j] = std::exp(static_cast<double>(row[j]) - mx);
    for (auto& e : p) e /= total;
    for (std::size_t j = 0; j < class_count_; ++j) {
      grad.at(b, j) = static_cast<float>(p[class_k] * ((j == class_k ? 1.0 : 0.0) - p[j]));
    }
  }
  for (std::size_t i = layers_.size(); i-- > idx + 1;) {
    const std::size_t a = i - (idx + 1);
    grad = layer_backward(layers_[i].kind, acts[a], acts[a + 1], grad, nullptr);
  }
  grad = grad.reshaped(h.shape());
  grad.check_finite("Model::grad_wrt_activation");
  return grad;
}

Model small_net(std::size_t channels, std::size_t height, std::size_t width, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto he = [&](Shape shape, std::size_t fan_in) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    std::vector<float> v(shape_size(shape));
    for (auto& e : v) e = dist(rng);
    return Tensor(std::move(shape), std::move(v));
  };
  auto conv = [&](std::size_t in, std::size_t out) {
    Conv2d c;
    c.kernel = 3;
    c.in_ch = in;
    c.out_ch = out;
    c.stride = 1;
    c.pad = 1;
    c.weight = he({out, in, 3, 3}, in * 9);
    c.bias = Tensor({out});
    return c;
  };
  Dense fc;
  fc.in = 32;
  fc.out = classes;
  std::vector<LayerSpec> layers;
  layers.push_back({"conv1", conv(channels, 8)});
  layers.push_back({"relu1", Relu{}});
  layers.push_back({"pool1", MaxPool{2}});
  layers.push_back({"conv2", conv(8, 16)});
  layers.push_back({"relu2", Relu{}});
  layers.push_back({"pool2", MaxPool{2}});
  layers.push_back({"conv3", conv(16, 32)});
  layers.push_back({"relu3", Relu{}});
  layers.push_back({"gap", GlobalAvgPool{}});
  fc.weight = he({classes, 32}, 32);
  fc.bias = Tensor({classes});
  layers.push_back({"fc", std::move(fc)});
  return Model({channels, height, width}, std::move(layers), classes, {"pool1", "relu2", "pool2", "relu3", "gap"});
}

}  // namespace rcav::nn
