#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rcav/benchmarks.hpp"
#include "rcav/concepts.hpp"
#include "rcav/hypothesis.hpp"
#include "rcav/metrics.hpp"
#include "rcav/sensitivity.hpp"
#include "rcav/train.hpp"

namespace rcav {

// A parsed config file: "section.key" -> value. Grammar in README.md.
struct ConfigValue {
  enum class Kind { string, integer, number, boolean, array };
  Kind kind = Kind::string;
  std::string text;                // scalar text; strings unescaped
  std::vector<ConfigValue> items;  // arrays
};

using ConfigTable = std::map<std::string, ConfigValue>;

// ConfigError with the line number on malformed input.
ConfigTable parse_config_table(std::string_view text);

struct ModelSection {
  std::string architecture = "small_net";
  nn::TrainConfig train;  // train.seed is derived from the run seed
};

struct RcavSection {
  std::vector<std::string> layers = {"pool1", "relu2", "pool2", "relu3", "gap"};
  double alpha = 10.0;
  Method method = Method::rcav_softmax_diff;
  NullMethod null = NullMethod::permutation;
  std::size_t permutations = 500;
  double sig = 0.05;
  StopRule stop = StopRule::adjusted;
  std::size_t bootstrap = 10;
  std::size_t concept_per_class = 100;
  LogisticConfig logistic;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output = "run";
  BenchmarkConfig dataset;
  ModelSection model;
  RcavSection rcav;
  MetricsConfig metrics;

  void validate() const;

  // Canonical text of every resolved key; equal configs give equal text.
  std::string to_toml() const;

  // Hash chain: each stage hashes its own section plus the hash of the stage
  // it consumes, so changing an upstream key invalidates everything below.
  std::string dataset_hash() const;
  std::string model_hash() const;
  std::string cav_hash() const;  // model + the keys CAV fitting reads
  std::string rcav_hash() const;
  std::string metrics_hash() const;
  std::string hash() const;  // whole resolved config except the output path
};

RunConfig config_from_table(const ConfigTable& table);
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Sets one dotted key ("rcav.alpha", "seed") from its text form.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace rcav
