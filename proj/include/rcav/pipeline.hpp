#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rcav/benchmarks.hpp"
#include "rcav/config.hpp"
#include "rcav/nn.hpp"
#include "rcav/sensitivity.hpp"

namespace rcav {

// Stage runner over one run directory:
//   data/            train/ and val/ datasets          (dataset hash)
//   model/           checkpoint + history.csv          (model hash)
//   cavs/            one CAV per layer                 (rcav hash)
//   score-<h>/       sensitivity.csv, samples.csv
//   test-<h>/        test.csv
//   metrics-<h>/     metrics.csv, plot-<layer>.tsv
//   svd-<h>/         linearity.csv (hashed like metrics: it uses the counterfactuals)
//   report.csv       rows gathered from the CSVs above
// Every stage directory carries stage.json with its hash and its parent's.
// A stage refuses to run on a parent produced under another hash, and refuses
// to overwrite its own directory from another hash unless `force` is set.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg, bool force = false);

  const RunConfig& config() const { return cfg_; }
  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path data_dir() const { return root_ / "data"; }
  std::filesystem::path model_dir() const { return root_ / "model"; }
  std::filesystem::path cav_dir() const { return root_ / "cavs"; }
  std::filesystem::path score_dir() const { return root_ / ("score-" + cfg_.rcav_hash()); }
  std::filesystem::path test_dir() const { return root_ / ("test-" + cfg_.rcav_hash()); }
  std::filesystem::path metrics_dir() const { return root_ / ("metrics-" + cfg_.metrics_hash()); }
  std::filesystem::path svd_dir() const { return root_ / ("svd-" + cfg_.metrics_hash()); }
  std::filesystem::path report_path() const { return root_ / "report.csv"; }

  void gen();
  void train();
  void fit_cav();
  void score();
  void test();
  void metrics();
  void svd();
  void report();
  void all();

  // Artifact loaders; MissingArtifactError / StaleArtifactError as above.
  Dataset load_split(Split split) const;
  nn::Model load_model() const;
  ConceptSet concept_set(const Dataset& val) const;
  std::vector<CAV> load_cavs() const;

  void set_log(std::function<void(const std::string&)> log) { log_ = std::move(log); }

 private:
  void begin_stage(const std::filesystem::path& dir, const std::string& stage, const std::string& hash);
  void finish_stage(const std::filesystem::path& dir, const std::string& stage, const std::string& hash,
                    const std::string& parent);
  void require_stage(const std::filesystem::path& dir, const std::string& stage, const std::string& hash) const;
  void note(const std::string& msg) const;

  RunConfig cfg_;
  std::filesystem::path root_;
  bool force_;
  std::function<void(const std::string&)> log_;
};

// Parses the numeric columns of a "# rcav ..." CSV into rows of strings.
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace rcav
