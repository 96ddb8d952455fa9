#include "rcav/sensitivity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "rcav/errors.hpp"
#include "rcav/kernels.hpp"
#include "rcav/linalg.hpp"
#include "rcav/random.hpp"
#include "rcav/tensor_io.hpp"

namespace rcav {

namespace {

constexpr std::size_t kChunk = 256;

double norm_of(std::span<const float> v) { return std::sqrt(kernels::sum_squares(v)); }

double dot_double(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

Tensor as_batch(const nn::Model& model, const Tensor& x) {
  if (x.shape() == model.input_shape()) {
    Shape s{1};
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    return x.reshaped(s);
  }
  return x;
}

const std::string& layer_of(const CAV& cav, const SensitivityConfig& cfg) {
  if (!cfg.layer.empty() && cfg.layer != cav.layer) {
    throw ConfigError("CAV was fit on layer " + cav.layer + " but scoring asks for " + cfg.layer);
  }
  return cav.layer;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::rcav_softmax_diff: return "rcav";
    case Method::tcav_grad_sign: return "tcav-grad";
    case Method::tcav_cosine: return "tcav-cosine";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "rcav" || name == "rcav_softmax_diff") return Method::rcav_softmax_diff;
  if (name == "tcav-grad" || name == "tcav_grad_sign") return Method::tcav_grad_sign;
  if (name == "tcav-cosine" || name == "tcav_cosine") return Method::tcav_cosine;
  throw ConfigError("unknown scoring method: " + std::string(name));
}

void SensitivityConfig::validate() const {
  if (!(alpha_step > 0.0) || !std::isfinite(alpha_step)) throw ConfigError("alpha must be > 0");
}

SensitivityProbe::SensitivityProbe(const nn::Model& model, std::string layer, const Tensor& images,
                                   std::size_t class_k, bool with_gradients)
    : model_(&model), layer_(std::move(layer)), class_k_(class_k) {
  if (class_k_ >= model.class_count()) throw IndexError("class_k out of range");
  if (!model.is_probe(layer_)) throw LookupError("layer " + layer_ + " is not a probe layer");
  const Tensor batch = as_batch(model, images);
  if (batch.empty() || batch.dim(0) == 0) throw DataError("no samples to score");
  const Tensor h = model.forward_to(layer_, batch);
  activations_ = h.reshaped({h.dim(0), h.row_size()});
  const Tensor logits = model.logits_from(layer_, activations_);
  base_probability_.resize(activations_.dim(0));
  for (std::size_t i = 0; i < base_probability_.size(); ++i) {
    base_probability_[i] = softmax_probability(logits.row(i), class_k_);
  }
  if (with_gradients) gradients_ = model.grad_wrt_activation(layer_, activations_, class_k_);
}

std::vector<double> SensitivityProbe::rcav_scores(std::span<const float> vector, double alpha) const {
  const double nv = norm_of(vector);
  if (nv == 0.0) throw DegenerateError("cannot step along a zero CAV");
  std::vector<float> step(vector.size());
  for (std::size_t j = 0; j < vector.size(); ++j) step[j] = static_cast<float>(alpha * vector[j] / nv);
  const std::size_t n = size(), d = dim();
  std::vector<double> out(n);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    Tensor moved = activations_.slice_rows(begin, end);
    for (std::size_t i = 0; i < end - begin; ++i) {
      auto r = moved.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] += step[j];
    }
    const Tensor logits = model_->logits_from(layer_, moved);
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = softmax_probability(logits.row(i - begin), class_k_) - base_probability_[i];
    }
  }
  return out;
}

std::vector<double> SensitivityProbe::tcav_scores(std::span<const float> vector, Method method) const {
  if (gradients_.empty()) throw ConfigError("probe was built without gradients");
  const double nv = norm_of(vector);
  if (nv == 0.0) throw DegenerateError("cannot score a zero CAV");
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto g = gradients_.row(i);
    const double inner = dot_double(g, vector) / nv;
    if (method == Method::tcav_grad_sign) {
      out[i] = inner;
    } else {
      const double ng = norm_of(g);
      if (ng == 0.0) throw DegenerateError("cosine similarity is undefined for a zero gradient (sample " + std::to_string(i) + ")");
      out[i] = std::clamp(inner / ng, -1.0, 1.0);
    }
  }
  return out;
}

std::vector<double> SensitivityProbe::scores(std::span<const float> vector, const SensitivityConfig& cfg) const {
  cfg.validate();
  if (vector.size() != dim()) {
    throw DimensionError("vector has " + std::to_string(vector.size()) + " entries, layer " + layer_ + " has " +
                         std::to_string(dim()));
  }
  if (cfg.method == Method::rcav_softmax_diff) return rcav_scores(vector, cfg.alpha_step);
  return tcav_scores(vector, cfg.method);
}

DatasetSensitivity SensitivityProbe::dataset(std::span<const float> vector, const SensitivityConfig& cfg) const {
  return dataset_score(scores(vector, cfg));
}

SampleSensitivity rcav_image_score(const nn::Model& model, const CAV& cav, const Tensor& x,
                                   const SensitivityConfig& cfg) {
  if (!(cfg.alpha_step >= 0.0) || !std::isfinite(cfg.alpha_step)) throw ConfigError("alpha must be >= 0");
  const SensitivityProbe probe(model, layer_of(cav, cfg), x, cfg.class_k, false);
  if (probe.size() != 1) throw DimensionError("rcav_image_score takes a single image");
  if (cav.vector.size() != probe.dim()) throw DimensionError("CAV and activation sizes differ");
  return {0, probe.rcav_scores(cav.vector.data(), cfg.alpha_step)[0]};
}

SampleSensitivity tcav_image_score(const nn::Model& model, const CAV& cav, const Tensor& x,
                                   const SensitivityConfig& cfg) {
  SensitivityConfig c = cfg;
  if (c.method == Method::rcav_softmax_diff) c.method = Method::tcav_grad_sign;
  const SensitivityProbe probe(model, layer_of(cav, cfg), x, cfg.class_k, true);
  if (probe.size() != 1) throw DimensionError("tcav_image_score takes a single image");
  return {0, probe.scores(cav.vector.data(), c)[0]};
}

DatasetSensitivity dataset_score(std::span<const double> scores) {
  if (scores.empty()) throw DataError("dataset score of an empty sample list");
  DatasetSensitivity d;
  d.n_samples = scores.size();
  d.nonnegative = static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [](double s) { return s >= 0.0; }));
  d.positive_fraction = static_cast<double>(d.nonnegative) / static_cast<double>(d.n_samples);
  d.score = d.positive_fraction - 0.5;
  return d;
}

DatasetSensitivity dataset_score(std::span<const SampleSensitivity> scores) {
  std::vector<double> s;
  s.reserve(scores.size());
  for (const auto& x : scores) s.push_back(x.score);
  return dataset_score(s);
}

std::string_view null_method_name(NullMethod m) {
  switch (m) {
    case NullMethod::permutation: return "permutation";
    case NullMethod::uniform: return "uniform";
    case NullMethod::ttest: return "ttest";
  }
  return "?";
}

NullMethod parse_null_method(std::string_view name) {
  if (name == "permutation") return NullMethod::permutation;
  if (name == "uniform" || name == "uniform_sphere") return NullMethod::uniform;
  if (name == "ttest" || name == "t-test") return NullMethod::ttest;
  throw ConfigError("unknown null method: " + std::string(name));
}

void TestConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("significance threshold must lie in (0,1)");
  if (null != NullMethod::ttest && permutations == 0) throw ConfigError("permutations must be at least 1");
  if (null == NullMethod::ttest && bootstrap < 2) throw ConfigError("t-test needs at least 2 bootstrap refits");
  if (concepts_tested == 0) throw ConfigError("concepts_tested must be at least 1");
}

HypothesisResult test_cav(const ConceptActivations& acts, const CAV& cav, const SensitivityProbe& probe,
                          const SensitivityConfig& cfg, const TestConfig& test_cfg, std::size_t n_tests,
                          std::vector<double>* null_scores) {
  test_cfg.validate();
  const double observed = probe.dataset(cav.vector.data(), cfg).score;
  std::vector<double> seen;
  const PermutationTestConfig pcfg{test_cfg.threshold, n_tests, test_cfg.stop};
  HypothesisResult r;
  switch (test_cfg.null) {
    case NullMethod::permutation: {
      const auto base = derive_seed(test_cfg.seed, 1);
      r = permutation_test(
          observed, test_cfg.permutations,
          [&](std::size_t i) {
            seen.push_back(probe.dataset(permutation_null(acts, base, i, test_cfg.logistic).vector.data(), cfg).score);
            return seen.back();
          },
          pcfg);
      break;
    }
    case NullMethod::uniform: {
      const auto base = derive_seed(test_cfg.seed, 2);
      r = permutation_test(
          observed, test_cfg.permutations,
          [&](std::size_t i) {
            seen.push_back(probe.dataset(uniform_sphere_vector(probe.dim(), base, i).data(), cfg).score);
            return seen.back();
          },
          pcfg);
      r.method = "uniform";
      break;
    }
    case NullMethod::ttest: {
      const auto boot = derive_seed(test_cfg.seed, 3);
      const auto base = derive_seed(test_cfg.seed, 1);
      std::vector<double> concept_scores;
      for (std::size_t j = 0; j < test_cfg.bootstrap; ++j) {
        concept_scores.push_back(probe.dataset(bootstrap_cav(acts, boot + j, test_cfg.logistic).vector.data(), cfg).score);
        seen.push_back(probe.dataset(permutation_null(acts, base, j, test_cfg.logistic).vector.data(), cfg).score);
      }
      r = ttest_significance(concept_scores, seen, test_cfg.threshold, n_tests);
      break;
    }
  }
  if (null_scores) *null_scores = std::move(seen);
  return r;
}

SensitivityReport run_rcav(const nn::Model& model, const Dataset& data, const ConceptSet& cs,
                           const std::vector<std::string>& layers, const SensitivityConfig& cfg,
                           const TestConfig& test_cfg) {
  cfg.validate();
  test_cfg.validate();
  if (layers.empty()) throw ConfigError("no layers to test");
  for (const auto& l : layers) {
    if (!model.is_probe(l)) throw LookupError("layer " + l + " is not a probe layer");
  }
  const auto idx = data.indices_of_class(cfg.class_k);
  if (idx.empty()) throw DataError("no samples of class " + std::to_string(cfg.class_k));
  const Dataset sub = data.subset(idx);
  const std::size_t n_tests = layers.size() * test_cfg.concepts_tested;
  SensitivityReport report;
  for (const auto& layer : layers) {
    SensitivityConfig lc = cfg;
    lc.layer = layer;
    LayerReport lr;
    lr.layer = layer;
    lr.concept_name = cs.target_name();
    lr.class_k = cfg.class_k;
    lr.method = cfg.method;
    const auto acts = concept_activations(model, layer, cs);
    lr.cav = fit_cav(acts, test_cfg.seed, test_cfg.logistic);
    const SensitivityProbe probe(model, layer, sub.images, cfg.class_k, cfg.method != Method::rcav_softmax_diff);
    const auto s = probe.scores(lr.cav.vector.data(), lc);
    for (std::size_t i = 0; i < s.size(); ++i) lr.samples.push_back({idx[i], s[i]});
    lr.observed = dataset_score(s);
    lr.test = test_cav(acts, lr.cav, probe, lc, test_cfg, n_tests, &lr.null_scores);
    report.layers.push_back(std::move(lr));
  }
  return report;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

void write_report_csv(const SensitivityReport& report, const std::filesystem::path& path,
                      const std::string& config_hash) {
  std::string out = "# rcav config_hash=" + config_hash + "\n";
  out += "layer,concept,class,method,null,S,positive_fraction,n_samples,p_raw,p_adjusted,n_tests,exceedances,"
         "permutations_run,permutations_total,early_stopped,significant,cav_heldout_accuracy\n";
  for (const auto& l : report.layers) {
    out += l.layer + "," + l.concept_name + "," + std::to_string(l.class_k) + "," + std::string(method_name(l.method)) +
           "," + l.test.method + "," + format_double(l.observed.score) + "," +
           format_double(l.observed.positive_fraction) + "," + std::to_string(l.observed.n_samples) + "," +
           format_double(l.test.p_raw) + "," + format_double(l.test.p_adjusted) + "," +
           std::to_string(l.test.n_tests) + "," + std::to_string(l.test.exceedances) + "," +
           std::to_string(l.test.permutations_run) + "," + std::to_string(l.test.permutations_total) + "," +
           (l.test.early_stopped ? "1" : "0") + "," + (l.test.significant ? "1" : "0") + "," +
           format_double(l.cav.heldout_accuracy) + "\n";
  }
  write_text(path, out);
}

void write_samples_csv(const SensitivityReport& report, const std::filesystem::path& path,
                       const std::string& config_hash) {
  std::string out = "# rcav config_hash=" + config_hash + "\n";
  out += "layer,concept,class,method,sample_id,score\n";
  for (const auto& l : report.layers) {
    for (const auto& s : l.samples) {
      out += l.layer + "," + l.concept_name + "," + std::to_string(l.class_k) + "," +
             std::string(method_name(l.method)) + "," + std::to_string(s.sample_id) + "," + format_double(s.score) +
             "\n";
    }
  }
  write_text(path, out);
}

}  // namespace rcav
