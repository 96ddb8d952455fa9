#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rcav/concepts.hpp"
#include "rcav/dataset.hpp"
#include "rcav/hypothesis.hpp"
#include "rcav/nn.hpp"
#include "rcav/tensor.hpp"

namespace rcav {

enum class Method { rcav_softmax_diff, tcav_grad_sign, tcav_cosine };

// Short names rcav, tcav-grad, tcav-cosine; parse also takes the long ones.
std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct SensitivityConfig {
  double alpha_step = 10.0;
  Method method = Method::rcav_softmax_diff;
  std::size_t class_k = 0;
  std::string layer;

  void validate() const;
};

struct SampleSensitivity {
  std::size_t sample_id = 0;
  double score = 0.0;
};

struct DatasetSensitivity {
  double score = 0.0;  // positive_fraction - 0.5
  std::size_t n_samples = 0;
  std::size_t nonnegative = 0;
  double positive_fraction = 0.0;
};

// Class-k softmax after stepping f_l(x) by alpha along the unit CAV, minus
// before. `x` is one image, with or without a leading batch axis of 1.
SampleSensitivity rcav_image_score(const nn::Model& model, const CAV& cav, const Tensor& x,
                                   const SensitivityConfig& cfg);
// <grad, V/|V|> or cos(grad, V) per cfg.method; DegenerateError for a cosine
// with a zero gradient.
SampleSensitivity tcav_image_score(const nn::Model& model, const CAV& cav, const Tensor& x,
                                   const SensitivityConfig& cfg);

// -0.5 + fraction of scores >= 0; DataError when empty.
DatasetSensitivity dataset_score(std::span<const SampleSensitivity> scores);
DatasetSensitivity dataset_score(std::span<const double> scores);

// Base activations, class-k probabilities and head gradients of a fixed image
// set at one layer, so many vectors can be scored without rerunning f_l.
class SensitivityProbe {
 public:
  // Gradients are only computed when `with_gradients` is set; TCAV scoring
  // without them is a ConfigError.
  SensitivityProbe(const nn::Model& model, std::string layer, const Tensor& images, std::size_t class_k,
                   bool with_gradients = true);

  std::size_t size() const { return base_probability_.size(); }
  std::size_t dim() const { return activations_.dim(1); }
  const std::string& layer() const { return layer_; }

  std::vector<double> scores(std::span<const float> vector, const SensitivityConfig& cfg) const;
  DatasetSensitivity dataset(std::span<const float> vector, const SensitivityConfig& cfg) const;

  // Any alpha >= 0; alpha == 0 gives exact zeros.
  std::vector<double> rcav_scores(std::span<const float> vector, double alpha) const;
  std::vector<double> tcav_scores(std::span<const float> vector, Method method) const;

 private:

  const nn::Model* model_;
  std::string layer_;
  std::size_t class_k_;
  Tensor activations_;  // [n, D]
  Tensor gradients_;    // [n, D]
  std::vector<double> base_probability_;
};

enum class NullMethod { permutation, uniform, ttest };

std::string_view null_method_name(NullMethod m);
NullMethod parse_null_method(std::string_view name);

struct TestConfig {
  NullMethod null = NullMethod::permutation;
  std::size_t permutations = 500;
  double threshold = 0.05;
  StopRule stop = StopRule::adjusted;
  std::size_t bootstrap = 10;  // concept refits and null fits for the t-test
  std::size_t concepts_tested = 1;
  std::uint64_t seed = 0;
  LogisticConfig logistic;
  ConceptSetLimits limits;

  void validate() const;
};

struct LayerReport {
  std::string layer;
  std::string concept_name;
  std::size_t class_k = 0;
  Method method = Method::rcav_softmax_diff;
  CAV cav;
  std::vector<SampleSensitivity> samples;
  DatasetSensitivity observed;
  HypothesisResult test;
  std::vector<double> null_scores;  // the ones actually evaluated
};

struct SensitivityReport {
  std::vector<LayerReport> layers;
};

// For each layer: fit the CAV, score the class-k samples of `data`, compute S
// and run the chosen test with n_tests = layers x concepts_tested.
SensitivityReport run_rcav(const nn::Model& model, const Dataset& data, const ConceptSet& cs,
                           const std::vector<std::string>& layers, const SensitivityConfig& cfg,
                           const TestConfig& test_cfg);

// Significance only, for a CAV and probe already at hand.
HypothesisResult test_cav(const ConceptActivations& acts, const CAV& cav, const SensitivityProbe& probe,
                          const SensitivityConfig& cfg, const TestConfig& test_cfg, std::size_t n_tests,
                          std::vector<double>* null_scores = nullptr);

// First line "# rcav config_hash=<hash>", then a header row.
void write_report_csv(const SensitivityReport& report, const std::filesystem::path& path,
                      const std::string& config_hash);
void write_samples_csv(const SensitivityReport& report, const std::filesystem::path& path,
                       const std::string& config_hash);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace rcav
