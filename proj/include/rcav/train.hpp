#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rcav/dataset.hpp"
#include "rcav/nn.hpp"

namespace rcav::nn {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double mixup_alpha = 0.2;  // 0 disables mixup
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  double loss = 0.0;  // mean soft-label cross entropy over the epoch's batches
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;  // NaN when no validation set was given
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  std::vector<double> step_losses;
};

// Images plus soft targets [batch, classes].
struct Batch {
  Tensor images;
  Tensor targets;
};

// Gathers `indices` into a batch. With mixup_alpha > 0 every sample is blended
// with a partner drawn by shuffling the batch, lambda ~ Beta(alpha, alpha), and
// labels mix the same way. With mixup_alpha == 0 no random numbers are drawn.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, double mixup_alpha, std::mt19937_64& rng);

// Minibatch SGD with momentum on soft-label cross entropy. Single-threaded and
// bitwise deterministic for a given seed.
TrainResult train(const Model& init, const Dataset& data, const TrainConfig& cfg, const Dataset* validation = nullptr);

// Fraction of samples whose argmax prediction equals the label.
double accuracy(const Model& model, const Dataset& data, std::size_t batch_size = 256);

}  // namespace rcav::nn
