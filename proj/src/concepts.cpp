#include "rcav/concepts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "rcav/errors.hpp"
#include "rcav/hashing.hpp"
#include "rcav/tensor_io.hpp"
#include "rcav/kernels.hpp"
#include "rcav/random.hpp"

namespace rcav {

ConceptSet::ConceptSet(std::vector<std::string> names, std::vector<Tensor> samples,
                       std::vector<std::vector<std::size_t>> class_labels, std::size_t target, std::size_t class_count,
                       ConceptSetLimits limits)
    : names_(std::move(names)),
      samples_(std::move(samples)),
      labels_(std::move(class_labels)),
      target_(target),
      class_count_(class_count),
      limits_(limits) {
  validate();
  for (std::size_t c = 0; c < names_.size(); ++c) {
    if (labels_[c].size() < limits_.recommended) {
      warnings_.push_back("concept " + names_[c] + " has " + std::to_string(labels_[c].size()) +
                          " samples, fewer than the recommended " + std::to_string(limits_.recommended));
    }
  }
}

void ConceptSet::validate() const {
  if (names_.size() < 2) throw DataError("a concept set needs at least two concepts");
  if (samples_.size() != names_.size() || labels_.size() != names_.size()) {
    throw DataError("concept set: names, samples and labels disagree in length");
  }
  if (target_ >= names_.size()) throw DataError("concept set: target index out of range");
  for (std::size_t c = 0; c < names_.size(); ++c) {
    const auto n = labels_[c].size();
    if (samples_[c].empty() || samples_[c].dim(0) != n) {
      throw DataError("concept " + names_[c] + ": sample count disagrees with label count");
    }
    if (samples_[c].row_size() != samples_[0].row_size()) {
      throw DimensionError("concept " + names_[c] + ": sample shape differs from other concepts");
    }
    if (n < limits_.floor || n > limits_.ceiling) {
      throw DataError("concept " + names_[c] + " has " + std::to_string(n) + " samples; allowed range is [" +
                      std::to_string(limits_.floor) + ", " + std::to_string(limits_.ceiling) + "]");
    }
    std::vector<std::size_t> per_class(class_count_, 0);
    for (auto l : labels_[c]) {
      if (l >= class_count_) throw DataError("concept " + names_[c] + ": class label out of range");
      ++per_class[l];
    }
    for (std::size_t k = 1; k < class_count_; ++k) {
      if (per_class[k] != per_class[0]) {
        throw DataError("concept " + names_[c] + " is not class balanced: class 0 has " +
                        std::to_string(per_class[0]) + " samples, class " + std::to_string(k) + " has " +
                        std::to_string(per_class[k]));
      }
    }
  }
}

Tensor ConceptSet::pooled_images() const { return concat_rows(samples_); }

std::vector<int> ConceptSet::binary_labels() const {
  std::vector<int> y;
  for (std::size_t c = 0; c < names_.size(); ++c) y.insert(y.end(), labels_[c].size(), c == target_ ? 1 : 0);
  return y;
}

ConceptSet concept_set_by_statistic(const Dataset& data, const std::vector<double>& statistic, std::size_t per_class,
                                    const std::string& high_name, const std::string& low_name,
                                    ConceptSetLimits limits) {
  if (statistic.size() != data.size()) throw DataError("statistic length differs from dataset size");
  std::vector<Tensor> hi, lo;
  std::vector<std::size_t> hi_lab, lo_lab;
  for (std::size_t k = 0; k < data.class_count; ++k) {
    auto idx = data.indices_of_class(k);
    if (idx.size() < 2 * per_class) {
      throw DataError("class " + std::to_string(k) + " has " + std::to_string(idx.size()) +
                      " samples; concept set needs " + std::to_string(2 * per_class));
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return statistic[a] > statistic[b]; });
    for (std::size_t j = 0; j < per_class; ++j) {
      hi.push_back(data.image(idx[j]));
      hi_lab.push_back(k);
      lo.push_back(data.image(idx[idx.size() - 1 - j]));
      lo_lab.push_back(k);
    }
  }
  return ConceptSet({high_name, low_name}, {stack(hi), stack(lo)}, {hi_lab, lo_lab}, 0, data.class_count, limits);
}

ConceptActivations concept_activations(const nn::Model& model, const std::string& layer, const ConceptSet& cs) {
  cs.validate();
  if (!model.is_probe(layer)) throw LookupError("layer " + layer + " is not a probe layer");
  const Tensor images = cs.pooled_images();
  const Tensor h = model.forward_to(layer, images);
  ConceptActivations a;
  a.layer = layer;
  a.concept_name = cs.target_name();
  a.features = h.reshaped({h.dim(0), h.row_size()});
  a.labels = cs.binary_labels();
  return a;
}

namespace {

CAV to_cav(const ConceptActivations& acts, const LogisticFit& fit, std::uint64_t seed) {
  CAV c;
  c.layer = acts.layer;
  c.concept_name = acts.concept_name;
  c.vector = Tensor({fit.weights.size()}, fit.weights);
  if (kernels::sum_squares(c.vector.data()) == 0.0) throw DegenerateError("CAV for " + acts.concept_name + " is zero");
  c.bias = fit.bias;
  c.train_accuracy = fit.train_accuracy;
  c.heldout_accuracy = fit.heldout_accuracy;
  c.seed = seed;
  c.iterations = fit.iterations;
  c.converged = fit.converged;
  return c;
}

void check_two_labels(const ConceptActivations& acts) {
  const bool has0 = std::find(acts.labels.begin(), acts.labels.end(), 0) != acts.labels.end();
  const bool has1 = std::find(acts.labels.begin(), acts.labels.end(), 1) != acts.labels.end();
  if (!has0 || !has1) throw DataError("CAV fit needs samples of the concept and of at least one other concept");
}

}  // namespace

CAV fit_cav(const nn::Model& model, const std::string& layer, const ConceptSet& cs, std::uint64_t seed,
            const LogisticConfig& cfg) {
  return fit_cav(concept_activations(model, layer, cs), seed, cfg);
}

CAV fit_cav(const ConceptActivations& acts, std::uint64_t seed, const LogisticConfig& cfg) {
  check_two_labels(acts);
  return to_cav(acts, fit_logistic(acts.features, acts.labels, seed, cfg), seed);
}

CAV bootstrap_cav(const ConceptActivations& acts, std::uint64_t seed, const LogisticConfig& cfg) {
  check_two_labels(acts);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pick;
  for (int label : {1, 0}) {
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < acts.labels.size(); ++i) {
      if (acts.labels[i] == label) group.push_back(i);
    }
    std::uniform_int_distribution<std::size_t> u(0, group.size() - 1);
    for (std::size_t j = 0; j < group.size(); ++j) pick.push_back(group[u(rng)]);
  }
  const std::size_t d = acts.features.dim(1);
  std::vector<float> rows;
  rows.reserve(pick.size() * d);
  std::vector<int> y;
  for (auto i : pick) {
    auto r = acts.features.row(i);
    rows.insert(rows.end(), r.begin(), r.end());
    y.push_back(acts.labels[i]);
  }
  const Tensor x({pick.size(), d}, std::move(rows));
  return to_cav(acts, fit_logistic(x, y, seed, cfg), seed);
}

std::string_view null_kind_name(NullKind kind) {
  return kind == NullKind::permutation ? "permutation" : "uniform";
}

CAV permutation_null(const ConceptActivations& acts, std::uint64_t seed, std::size_t i, const LogisticConfig& cfg) {
  check_two_labels(acts);
  const std::uint64_t s = seed + i;
  std::vector<int> y = acts.labels;
  std::mt19937_64 rng(s);
  std::shuffle(y.begin(), y.end(), rng);
  return to_cav(acts, fit_logistic(acts.features, y, s, cfg), s);
}

NullDistribution permutation_nulls(const ConceptActivations& acts, std::size_t count, std::uint64_t seed,
                                   const LogisticConfig& cfg) {
  NullDistribution n;
  n.kind = NullKind::permutation;
  for (std::size_t i = 0; i < count; ++i) {
    CAV c = permutation_null(acts, seed, i, cfg);
    n.heldout_accuracies.push_back(c.heldout_accuracy);
    n.vectors.push_back(std::move(c.vector));
  }
  return n;
}

NullDistribution permutation_nulls(const nn::Model& model, const std::string& layer, const ConceptSet& cs,
                                   std::size_t count, std::uint64_t seed, const LogisticConfig& cfg) {
  return permutation_nulls(concept_activations(model, layer, cs), count, seed, cfg);
}

Tensor uniform_sphere_vector(std::size_t dim, std::uint64_t seed, std::size_t i) {
  if (dim == 0) throw DimensionError("uniform_sphere_vector needs dim >= 1");
  std::mt19937_64 rng(seed + i);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double ss = 0.0;
  while (ss == 0.0) {
    for (auto& x : v) x = g(rng);
    ss = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
  }
  const double inv = 1.0 / std::sqrt(ss);
  std::vector<float> out(dim);
  std::transform(v.begin(), v.end(), out.begin(), [&](double x) { return static_cast<float>(x * inv); });
  return Tensor({dim}, std::move(out));
}

NullDistribution uniform_sphere_nulls(std::size_t dim, std::size_t count, std::uint64_t seed) {
  NullDistribution n;
  n.kind = NullKind::uniform_sphere;
  for (std::size_t i = 0; i < count; ++i) n.vectors.push_back(uniform_sphere_vector(dim, seed, i));
  return n;
}

void save_cav(const CAV& cav, const std::filesystem::path& dir, const std::string& stem) {
  const auto bytes = encode_tensor(cav.vector);
  write_file_bytes(dir / (stem + ".rcvt"), bytes);
  const nlohmann::json m = {{"format", "rcav-cav"},
                            {"layer", cav.layer},
                            {"concept", cav.concept_name},
                            {"seed", cav.seed},
                            {"bias", cav.bias},
                            {"train_accuracy", cav.train_accuracy},
                            {"heldout_accuracy", cav.heldout_accuracy},
                            {"iterations", cav.iterations},
                            {"converged", cav.converged},
                            {"vector", stem + ".rcvt"},
                            {"sha256", sha256_hex(std::span<const std::uint8_t>(bytes))}};
  const auto text = m.dump(2) + "\n";
  write_file_bytes(dir / (stem + ".json"),
                   std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

CAV load_cav(const std::filesystem::path& dir, const std::string& stem) {
  const auto raw = read_file_bytes(dir / (stem + ".json"));
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / (stem + ".json")).string() + ": " + e.what());
  }
  const auto bytes = read_file_bytes(dir / m.at("vector").get<std::string>());
  if (sha256_hex(std::span<const std::uint8_t>(bytes)) != m.at("sha256").get<std::string>()) {
    throw FormatError((dir / (stem + ".rcvt")).string() + ": sha256 mismatch");
  }
  CAV c;
  c.layer = m.at("layer");
  c.concept_name = m.at("concept");
  c.seed = m.at("seed");
  c.bias = m.at("bias");
  c.train_accuracy = m.at("train_accuracy");
  c.heldout_accuracy = m.at("heldout_accuracy");
  c.iterations = m.at("iterations");
  c.converged = m.at("converged");
  c.vector = decode_tensor(bytes);
  return c;
}

}  // namespace rcav
