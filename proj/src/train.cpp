#include "rcav/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rcav/errors.hpp"
#include "rcav/kernels.hpp"

namespace rcav::nn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(mixup_alpha >= 0.0)) throw ConfigError("mixup_alpha must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, double mixup_alpha, std::mt19937_64& rng) {
  const std::size_t n = indices.size();
  const std::size_t k = data.class_count;
  const std::size_t row = data.images.row_size();
  Shape s = data.images.shape();
  s[0] = n;
  std::vector<float> px(n * row);
  std::vector<float> tg(n * k, 0.0f);
  for (std::size_t b = 0; b < n; ++b) {
    auto src = data.images.row(indices[b]);
    std::copy(src.begin(), src.end(), px.begin() + static_cast<std::ptrdiff_t>(b * row));
    tg[b * k + data.labels[indices[b]]] = 1.0f;
  }
  if (mixup_alpha > 0.0 && n > 1) {
    std::vector<std::size_t> partner(n);
    std::iota(partner.begin(), partner.end(), std::size_t{0});
    std::shuffle(partner.begin(), partner.end(), rng);
    std::gamma_distribution<double> gamma(mixup_alpha, 1.0);
    std::vector<float> mixed(px.size());
    std::vector<float> mixed_t(tg.size());
    for (std::size_t b = 0; b < n; ++b) {
      const double g1 = gamma(rng);
      const double g2 = gamma(rng);
      const double lam = (g1 + g2) > 0.0 ? g1 / (g1 + g2) : 0.5;
      const auto lf = static_cast<float>(lam);
      const auto mf = static_cast<float>(1.0 - lam);
      const std::size_t j = partner[b];
      for (std::size_t i = 0; i < row; ++i) mixed[b * row + i] = lf * px[b * row + i] + mf * px[j * row + i];
      for (std::size_t c = 0; c < k; ++c) mixed_t[b * k + c] = lf * tg[b * k + c] + mf * tg[j * k + c];
    }
    px.swap(mixed);
    tg.swap(mixed_t);
  }
  return {Tensor(std::move(s), std::move(px)), Tensor({n, k}, std::move(tg))};
}

namespace {

struct ParamRef {
  Tensor* weight;
  Tensor* bias;
};

std::vector<ParamRef> params_of(Model& m) {
  std::vector<ParamRef> out;
  for (auto& layer : m.mutable_layers()) {
    if (auto* c = std::get_if<Conv2d>(&layer.kind)) {
      out.push_back({&c->weight, &c->bias});
    } else if (auto* d = std::get_if<Dense>(&layer.kind)) {
      out.push_back({&d->weight, &d->bias});
    } else {
      out.push_back({nullptr, nullptr});
    }
  }
  return out;
}

// Forward + backward on one batch; returns the mean loss and fills grads.
double batch_gradients(const Model& model, const Batch& batch, std::vector<LayerGrads>& grads, std::size_t& correct) {
  const auto& layers = model.layers();
  std::vector<Tensor> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(batch.images);
  for (const auto& l : layers) acts.push_back(layer_forward(l.kind, acts.back()));
  const Tensor& z = acts.back();
  const std::size_t n = z.dim(0), k = z.dim(1);
  Tensor dz({n, k});
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const auto row = z.row(b);
    const float mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (float v : row) total += std::exp(static_cast<double>(v) - mx);
    const double log_total = std::log(total);
    std::size_t arg = 0, target_arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double logp = static_cast<double>(row[c]) - mx - log_total;
      const double t = batch.targets.at(b, c);
      loss -= t * logp;
      dz.at(b, c) = static_cast<float>((std::exp(logp) - t) / static_cast<double>(n));
      if (row[c] > row[arg]) arg = c;
      if (batch.targets.at(b, c) > batch.targets.at(b, target_arg)) target_arg = c;
    }
    if (arg == target_arg) ++correct;
  }
  Tensor g = std::move(dz);
  for (std::size_t i = layers.size(); i-- > 0;) {
    g = layer_backward(layers[i].kind, acts[i], acts[i + 1], g, has_parameters(layers[i].kind) ? &grads[i] : nullptr);
  }
  return loss / static_cast<double>(n);
}

}  // namespace

TrainResult train(const Model& init, const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
  cfg.validate();
  if (data.size() == 0) throw DataError("training dataset is empty");
  data.validate();
  if (data.class_count > init.class_count()) throw DataError("dataset has more classes than the model");

  TrainResult result{init, {}, {}};
  Model& model = result.model;
  auto params = params_of(model);
  std::vector<LayerGrads> grads(params.size());
  std::vector<LayerGrads> velocity(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].weight) continue;
    velocity[i] = {Tensor(params[i].weight->shape()), Tensor(params[i].bias->shape())};
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Batch batch = make_batch(data, std::span(order).subspan(start, end - start), cfg.mixup_alpha, rng);
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].weight) grads[i] = {Tensor(params[i].weight->shape()), Tensor(params[i].bias->shape())};
      }
      const double loss = batch_gradients(model, batch, grads, correct);
      if (!std::isfinite(loss)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      result.step_losses.push_back(loss);
      loss_sum += loss;
      ++batches;
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].weight) continue;
        for (auto [p, g, v] : {std::tuple{params[i].weight, &grads[i].weight, &velocity[i].weight},
                               std::tuple{params[i].bias, &grads[i].bias, &velocity[i].bias}}) {
          auto pd = p->data();
          auto gd = g->data();
          auto vd = v->data();
          for (std::size_t j = 0; j < pd.size(); ++j) {
            vd[j] = mu * vd[j] + gd[j];
            pd[j] -= lr * vd[j];
          }
        }
      }
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(batches);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    stats.val_accuracy = validation ? accuracy(model, *validation) : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(stats);
  }
  for (const auto& p : params) {
    if (!p.weight) continue;
    p.weight->check_finite("train");
    p.bias->check_finite("train");
  }
  return result;
}

double accuracy(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw DataError("accuracy on empty dataset");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    const Tensor z = model.logits(data.images.slice_rows(start, end));
    for (std::size_t b = 0; b < z.dim(0); ++b) {
      const auto row = z.row(b);
      const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == data.labels[start + b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace rcav::nn
