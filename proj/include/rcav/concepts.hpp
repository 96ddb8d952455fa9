#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rcav/dataset.hpp"
#include "rcav/nn.hpp"
#include "rcav/tensor.hpp"

namespace rcav {

struct ConceptSetLimits {
  std::size_t floor = 50;         // hard minimum per concept
  std::size_t recommended = 100;  // below this a warning is recorded
  std::size_t ceiling = 300;
};

// Labelled example images for concepts C_1..C_m. Every concept must hold the
// same number of samples for each dataset class; unbalanced sets are rejected.
class ConceptSet {
 public:
  ConceptSet() = default;
  ConceptSet(std::vector<std::string> names, std::vector<Tensor> samples,
             std::vector<std::vector<std::size_t>> class_labels, std::size_t target, std::size_t class_count,
             ConceptSetLimits limits = {});

  const std::vector<std::string>& names() const { return names_; }
  const Tensor& samples(std::size_t concept_index) const { return samples_.at(concept_index); }
  const std::vector<std::size_t>& class_labels(std::size_t concept_index) const { return labels_.at(concept_index); }
  std::size_t target() const { return target_; }
  const std::string& target_name() const { return names_.at(target_); }
  std::size_t concept_count() const { return names_.size(); }
  std::size_t class_count() const { return class_count_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void validate() const;

  // All samples concatenated in concept order, with 1 for the target concept.
  Tensor pooled_images() const;
  std::vector<int> binary_labels() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> samples_;
  std::vector<std::vector<std::size_t>> labels_;
  std::size_t target_ = 0;
  std::size_t class_count_ = 2;
  ConceptSetLimits limits_;
  std::vector<std::string> warnings_;
};

// Top-`per_class` samples of each class by `statistic` form the target
// concept, the bottom-`per_class` form the contrasting concept.
ConceptSet concept_set_by_statistic(const Dataset& data, const std::vector<double>& statistic, std::size_t per_class,
                                    const std::string& high_name, const std::string& low_name,
                                    ConceptSetLimits limits = {});

struct LogisticConfig {
  // Step = learning_rate / L with L = 0.25 * mean ||x~||^2 + l2
  // where x~ is the sample with a bias coordinate appended.
  double learning_rate = 1.0;
  double l2 = 1e-3;
  std::size_t max_iter = 500;
  double grad_tol = 1e-6;
  double holdout_fraction = 0.2;
};

struct LogisticFit {
  std::vector<float> weights;
  double bias = 0.0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Full-batch gradient descent on L2-penalised logistic loss. Rows of `x` are
// samples; the held-out split is a seeded shuffle.
LogisticFit fit_logistic(const Tensor& x, std::span<const int> y, std::uint64_t seed, const LogisticConfig& cfg = {});

struct CAV {
  std::string layer;
  std::string concept_name;
  Tensor vector;  // activation-sized weight direction; bias is not part of it
  double bias = 0.0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Flattened layer activations of a concept set; shared by the concept CAV
// and all of its permutation nulls.
struct ConceptActivations {
  std::string layer;
  std::string concept_name;
  Tensor features;  // [N, D]
  std::vector<int> labels;
};

ConceptActivations concept_activations(const nn::Model& model, const std::string& layer, const ConceptSet& cs);

CAV fit_cav(const nn::Model& model, const std::string& layer, const ConceptSet& cs, std::uint64_t seed,
            const LogisticConfig& cfg = {});
CAV fit_cav(const ConceptActivations& acts, std::uint64_t seed, const LogisticConfig& cfg = {});

// CAV refit on a resample drawn with replacement inside each label group.
CAV bootstrap_cav(const ConceptActivations& acts, std::uint64_t seed, const LogisticConfig& cfg = {});

// `dir/<stem>.json` (layer, concept, seed, accuracies, sha256) and
// `dir/<stem>.rcvt` holding the vector.
void save_cav(const CAV& cav, const std::filesystem::path& dir, const std::string& stem);
CAV load_cav(const std::filesystem::path& dir, const std::string& stem);

enum class NullKind { permutation, uniform_sphere };

std::string_view null_kind_name(NullKind kind);

struct NullDistribution {
  NullKind kind = NullKind::permutation;
  std::vector<Tensor> vectors;
  std::vector<double> scores;  // filled once evaluated
  std::vector<double> heldout_accuracies;  // permutation nulls only
};

// Null i: labels shuffled with seed+i over the pooled sample list, then fit
// with seed+i.
CAV permutation_null(const ConceptActivations& acts, std::uint64_t seed, std::size_t i, const LogisticConfig& cfg = {});
NullDistribution permutation_nulls(const nn::Model& model, const std::string& layer, const ConceptSet& cs,
                                   std::size_t count, std::uint64_t seed, const LogisticConfig& cfg = {});
NullDistribution permutation_nulls(const ConceptActivations& acts, std::size_t count, std::uint64_t seed,
                                   const LogisticConfig& cfg = {});

// Unit vector i: normalised standard Gaussian draw seeded with seed+i.
Tensor uniform_sphere_vector(std::size_t dim, std::uint64_t seed, std::size_t i);
NullDistribution uniform_sphere_nulls(std::size_t dim, std::size_t count, std::uint64_t seed);

}  // namespace rcav
