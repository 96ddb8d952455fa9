#include "rcav/pipeline.hpp"

#include <charconv>
#include <sstream>

#include "json.hpp"
#include "rcav/checkpoint.hpp"
#include "rcav/errors.hpp"
#include "rcav/metrics.hpp"
#include "rcav/random.hpp"
#include "rcav/tensor_io.hpp"
#include "rcav/train.hpp"

namespace rcav {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kModelInitStream = 11;
constexpr std::uint64_t kTrainStream = 12;
constexpr std::uint64_t kConceptStream = 20;
constexpr std::uint64_t kCavStream = 21;

json read_stage(const fs::path& dir) {
  const auto path = dir / "stage.json";
  if (!fs::exists(path)) return nullptr;
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string stage_hash(const fs::path& dir) {
  const json s = read_stage(dir);
  return s.is_object() ? s.value("hash", "") : "";
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

std::vector<double> class_k_ground_truth(const nn::Model& model, const Dataset& val, const BenchmarkConfig& cfg,
                                         std::vector<std::size_t>& ids) {
  ids = val.indices_of_class(cfg.class_k());
  return ground_truth_sensitivity(model, val.subset(ids), cfg.augmenter(), cfg.class_k());
}

}  // namespace

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path, std::string* config_hash) {
  if (!fs::exists(path)) throw MissingArtifactError("missing " + path.string());
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.rfind("# rcav config_hash=", 0) == 0) {
      if (config_hash) *config_hash = line.substr(19);
      continue;
    }
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

Pipeline::Pipeline(RunConfig cfg, bool force) : cfg_(std::move(cfg)), root_(cfg_.output), force_(force) {
  cfg_.validate();
}

void Pipeline::note(const std::string& msg) const {
  if (log_) log_(msg);
}

void Pipeline::begin_stage(const fs::path& dir, const std::string& stage, const std::string& hash) {
  const auto existing = stage_hash(dir);
  if (!existing.empty() && existing != hash && !force_) {
    throw StaleArtifactError(dir.string() + " holds " + stage + " artifacts for config hash " + existing +
                             ", current hash is " + hash + " (use --force to replace)");
  }
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);
  write_text_file(root_ / "config.resolved.toml", cfg_.to_toml());
  write_text_file(root_ / "config.hash", cfg_.hash() + "\n");
}

void Pipeline::finish_stage(const fs::path& dir, const std::string& stage, const std::string& hash,
                            const std::string& parent) {
  const json s = {{"stage", stage}, {"hash", hash}, {"parent", parent}};
  write_text_file(dir / "stage.json", s.dump(2) + "\n");
  note(stage + " -> " + dir.string());
}

void Pipeline::require_stage(const fs::path& dir, const std::string& stage, const std::string& hash) const {
  const auto existing = stage_hash(dir);
  if (existing.empty()) {
    throw MissingArtifactError("missing " + (dir / "stage.json").string() + "; run the " + stage + " stage first");
  }
  if (existing != hash) {
    throw StaleArtifactError(dir.string() + " was produced for config hash " + existing +
                             " but the current config hashes to " + hash + "; rerun the " + stage + " stage");
  }
}

Dataset Pipeline::load_split(Split split) const {
  require_stage(data_dir(), "gen", cfg_.dataset_hash());
  return load_dataset(data_dir() / std::string(split_name(split)));
}

nn::Model Pipeline::load_model() const {
  require_stage(model_dir(), "train", cfg_.model_hash());
  return nn::load_checkpoint(model_dir());
}

ConceptSet Pipeline::concept_set(const Dataset& val) const {
  const auto& d = cfg_.dataset;
  const std::uint64_t seed = derive_seed(cfg_.seed, kConceptStream);
  if (d.kind == BenchmarkKind::contrast) return contrast_concept_set(val, cfg_.rcav.concept_per_class);
  std::vector<TextureKind> others;
  for (auto k : {TextureKind::stripe, TextureKind::dot, TextureKind::zigzag, TextureKind::spiral}) {
    if (k != d.target_texture) others.push_back(k);
  }
  return texture_concept_set(val, d.target_texture, others, cfg_.rcav.concept_per_class, seed);
}

std::vector<CAV> Pipeline::load_cavs() const {
  require_stage(cav_dir(), "fit-cav", cfg_.cav_hash());
  std::vector<CAV> out;
  for (const auto& l : cfg_.rcav.layers) out.push_back(load_cav(cav_dir(), l));
  return out;
}

void Pipeline::gen() {
  const auto h = cfg_.dataset_hash();
  if (!force_ && stage_hash(data_dir()) == h) return note("gen: up to date");
  begin_stage(data_dir(), "gen", h);
  BenchmarkConfig bc = cfg_.dataset;
  bc.seed = cfg_.seed;
  const auto bundle = make_benchmark(bc);
  json params = bc.to_json();
  params["augmenter"] = bundle.augmenter.to_json();
  params["class_k"] = bundle.class_k;
  save_dataset(bundle.train, data_dir() / "train", params);
  save_dataset(bundle.val, data_dir() / "val", params);
  finish_stage(data_dir(), "gen", h, "");
}

void Pipeline::train() {
  const auto h = cfg_.model_hash();
  if (!force_ && stage_hash(model_dir()) == h) return note("train: up to date");
  const Dataset tr = load_split(Split::train);
  const Dataset va = load_split(Split::val);
  begin_stage(model_dir(), "train", h);
  const auto shape = tr.image_shape();
  const auto init = nn::small_net(shape[0], shape[1], shape[2], tr.class_count, derive_seed(cfg_.seed, kModelInitStream));
  nn::TrainConfig tc = cfg_.model.train;
  tc.seed = derive_seed(cfg_.seed, kTrainStream);
  const auto result = nn::train(init, tr, tc, &va);
  std::string csv = "# rcav config_hash=" + h + "\nepoch,loss,train_accuracy,val_accuracy\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    const auto& s = result.history[e];
    csv += std::to_string(e + 1) + "," + format_double(s.loss) + "," + format_double(s.train_accuracy) + "," +
           format_double(s.val_accuracy) + "\n";
  }
  nn::save_checkpoint(result.model, model_dir(), {{"config_hash", h}});
  write_text_file(model_dir() / "history.csv", csv);
  note("train: val accuracy " + format_double(result.history.back().val_accuracy));
  finish_stage(model_dir(), "train", h, cfg_.dataset_hash());
}

void Pipeline::fit_cav() {
  const auto h = cfg_.cav_hash();
  if (!force_ && stage_hash(cav_dir()) == h) return note("fit-cav: up to date");
  const auto model = load_model();
  const auto cs = concept_set(load_split(Split::val));
  for (const auto& w : cs.warnings()) note("warning: " + w);
  begin_stage(cav_dir(), "fit-cav", h);
  for (const auto& layer : cfg_.rcav.layers) {
    const CAV cav = rcav::fit_cav(model, layer, cs, derive_seed(cfg_.seed, kCavStream), cfg_.rcav.logistic);
    save_cav(cav, cav_dir(), layer);
  }
  finish_stage(cav_dir(), "fit-cav", h, cfg_.model_hash());
}

void Pipeline::score() {
  const auto h = cfg_.rcav_hash();
  const auto model = load_model();
  const auto val = load_split(Split::val);
  const auto cavs = load_cavs();
  begin_stage(score_dir(), "score", h);
  const std::size_t k = cfg_.dataset.class_k();
  const auto ids = val.indices_of_class(k);
  const Dataset sub = val.subset(ids);
  SensitivityReport rep;
  for (const auto& cav : cavs) {
    SensitivityConfig sc{cfg_.rcav.alpha, cfg_.rcav.method, k, cav.layer};
    const SensitivityProbe probe(model, cav.layer, sub.images, k, cfg_.rcav.method != Method::rcav_softmax_diff);
    LayerReport lr;
    lr.layer = cav.layer;
    lr.concept_name = cav.concept_name;
    lr.class_k = k;
    lr.method = cfg_.rcav.method;
    lr.cav = cav;
    const auto s = probe.scores(cav.vector.data(), sc);
    for (std::size_t i = 0; i < s.size(); ++i) lr.samples.push_back({ids[i], s[i]});
    lr.observed = dataset_score(s);
    rep.layers.push_back(std::move(lr));
  }
  write_samples_csv(rep, score_dir() / "samples.csv", h);
  std::string csv = "# rcav config_hash=" + h + "\nlayer,concept,class,method,S,positive_fraction,n_samples,cav_train_accuracy,cav_heldout_accuracy\n";
  for (const auto& l : rep.layers) {
    csv += l.layer + "," + l.concept_name + "," + std::to_string(l.class_k) + "," + std::string(method_name(l.method)) +
           "," + format_double(l.observed.score) + "," + format_double(l.observed.positive_fraction) + "," +
           std::to_string(l.observed.n_samples) + "," + format_double(l.cav.train_accuracy) + "," +
           format_double(l.cav.heldout_accuracy) + "\n";
  }
  write_text_file(score_dir() / "sensitivity.csv", csv);
  finish_stage(score_dir(), "score", h, cfg_.rcav_hash());
}

void Pipeline::test() {
  const auto h = cfg_.rcav_hash();
  const auto model = load_model();
  const auto val = load_split(Split::val);
  const auto cavs = load_cavs();
  const auto cs = concept_set(val);
  begin_stage(test_dir(), "test", h);
  const std::size_t k = cfg_.dataset.class_k();
  const Dataset sub = val.subset(val.indices_of_class(k));
  TestConfig tc;
  tc.null = cfg_.rcav.null;
  tc.permutations = cfg_.rcav.permutations;
  tc.threshold = cfg_.rcav.sig;
  tc.stop = cfg_.rcav.stop;
  tc.bootstrap = cfg_.rcav.bootstrap;
  tc.seed = derive_seed(cfg_.seed, kCavStream);
  tc.logistic = cfg_.rcav.logistic;
  const std::size_t n_tests = cavs.size() * tc.concepts_tested;
  SensitivityReport rep;
  for (const auto& cav : cavs) {
    SensitivityConfig sc{cfg_.rcav.alpha, cfg_.rcav.method, k, cav.layer};
    const auto acts = concept_activations(model, cav.layer, cs);
    const SensitivityProbe probe(model, cav.layer, sub.images, k, cfg_.rcav.method != Method::rcav_softmax_diff);
    LayerReport lr;
    lr.layer = cav.layer;
    lr.concept_name = cav.concept_name;
    lr.class_k = k;
    lr.method = cfg_.rcav.method;
    lr.cav = cav;
    lr.observed = probe.dataset(cav.vector.data(), sc);
    lr.test = test_cav(acts, cav, probe, sc, tc, n_tests, &lr.null_scores);
    note("test " + cav.layer + ": S=" + format_double(lr.observed.score) + " p_adj=" + format_double(lr.test.p_adjusted));
    rep.layers.push_back(std::move(lr));
  }
  write_report_csv(rep, test_dir() / "test.csv", h);
  finish_stage(test_dir(), "test", h, cfg_.rcav_hash());
}

void Pipeline::metrics() {
  const auto h = cfg_.metrics_hash();
  const auto model = load_model();
  const auto val = load_split(Split::val);
  require_stage(score_dir(), "score", cfg_.rcav_hash());
  const auto rows = read_csv_rows(score_dir() / "samples.csv");
  begin_stage(metrics_dir(), "metrics", h);
  std::vector<std::size_t> ids;
  const auto truth = class_k_ground_truth(model, val, cfg_.dataset, ids);
  std::vector<MetricRow> out;
  const auto& mc = cfg_.metrics;
  const std::string method(method_name(cfg_.rcav.method));
  for (const auto& layer : cfg_.rcav.layers) {
    std::vector<double> pred;
    for (const auto& r : rows) {
      if (r.size() >= 6 && r[0] == layer) pred.push_back(parse_double(r[5]));
    }
    if (pred.size() != truth.size()) {
      throw DataError("score stage has " + std::to_string(pred.size()) + " samples for layer " + layer + ", expected " +
                      std::to_string(truth.size()));
    }
    const auto labels = binarize_truth(truth, mc.binarize_percentile, mc.signed_truth);
    const auto kt = kendall_tau_perm(pred, truth, mc.tau_permutations, derive_seed(mc.seed ^ cfg_.seed, 30));
    const std::size_t n = pred.size();
    const auto seed = cfg_.seed;
    out.push_back({"p_tau", layer, method, p_tau(pred, truth), 0.0, false, n, seed});
    out.push_back({"kendall_tau", layer, method, kt.tau, kt.p_value, true, n, seed});
    out.push_back({"auroc_p" + format_double(mc.binarize_percentile), layer, method, auroc(pred, labels), 0.0, false, n, seed});
    out.push_back({"auprc_p" + format_double(mc.binarize_percentile), layer, method, auprc(pred, labels), 0.0, false, n, seed});
    write_plot_tsv(pred, truth, metrics_dir() / ("plot-" + layer + ".tsv"));
  }
  write_metrics_csv(out, metrics_dir() / "metrics.csv", h);
  finish_stage(metrics_dir(), "metrics", h, cfg_.rcav_hash());
}

void Pipeline::svd() {
  const auto h = cfg_.metrics_hash();
  const auto model = load_model();
  const auto val = load_split(Split::val);
  begin_stage(svd_dir(), "svd", h);
  const std::size_t k = cfg_.dataset.class_k();
  const Dataset sub = val.subset(val.indices_of_class(k));
  const Dataset aug = cfg_.dataset.augmenter().apply_all(sub);
  std::vector<MetricRow> out;
  for (const auto& layer : cfg_.rcav.layers) {
    PowerIterationOptions opts;
    opts.seed = derive_seed(cfg_.seed, 40);
    const auto b = svd_linearity_bound(model, sub.images, aug.images, layer, opts);
    out.push_back({"residual_fraction", layer, "svd", b.residual_fraction, 0.0, false, b.n_samples, cfg_.seed});
    out.push_back({"explained_fraction", layer, "svd", b.explained_fraction, 0.0, false, b.n_samples, cfg_.seed});
  }
  write_metrics_csv(out, svd_dir() / "linearity.csv", h);
  finish_stage(svd_dir(), "svd", h, cfg_.model_hash());
}

void Pipeline::report() {
  std::string csv = "# rcav config_hash=" + cfg_.hash() + "\nsource,metric,layer,method,value,p_value\n";
  bool any = false;
  auto add_metrics = [&](const fs::path& path, const std::string& source) {
    if (!fs::exists(path)) return;
    any = true;
    for (const auto& r : read_csv_rows(path)) {
      csv += source + "," + r.at(0) + "," + r.at(1) + "," + r.at(2) + "," + r.at(3) + "," + r.at(4) + "\n";
    }
  };
  if (fs::exists(test_dir() / "test.csv")) {
    any = true;
    for (const auto& r : read_csv_rows(test_dir() / "test.csv")) {
      // layer,concept,class,method,null,S,...,p_raw(8),p_adjusted(9),...,significant(15)
      const std::string m = r.at(3) + "/" + r.at(4);
      csv += "test,S," + r.at(0) + "," + m + "," + r.at(5) + "," + r.at(8) + "\n";
      csv += "test,p_adjusted," + r.at(0) + "," + m + "," + r.at(9) + ",\n";
      csv += "test,significant," + r.at(0) + "," + m + "," + r.at(15) + ",\n";
    }
  }
  add_metrics(metrics_dir() / "metrics.csv", "metrics");
  add_metrics(svd_dir() / "linearity.csv", "svd");
  if (!any) throw MissingArtifactError("nothing to report under " + root_.string() + "; run test, metrics or svd first");
  write_text_file(report_path(), csv);
  note("report -> " + report_path().string());
}

void Pipeline::all() {
  gen();
  train();
  fit_cav();
  score();
  test();
  metrics();
  svd();
  report();
}

}  // namespace rcav
