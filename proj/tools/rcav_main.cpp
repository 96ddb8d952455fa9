// rcav: command-line driver for the pipeline stages.
//
// Exit codes: 0 success, 2 validation/config error (including stale
// artifacts), 3 missing artifact, 4 numeric degeneracy.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rcav/config.hpp"
#include "rcav/errors.hpp"
#include "rcav/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> layers;
  std::optional<double> alpha;
  std::optional<std::string> method;
  std::optional<std::string> null_method;
  std::optional<std::size_t> permutations;
  std::optional<double> sig;
  std::optional<double> percentile;
  std::optional<double> lambda;
  std::optional<double> delta;
  std::optional<std::string> output;
  std::optional<std::string> kind;
  std::vector<std::string> overrides;
  bool force = false;
  bool quiet = false;
};

rcav::RunConfig resolve(const Options& o) {
  rcav::RunConfig cfg;
  if (!o.run_dir.empty()) {
    cfg = rcav::load_config(std::filesystem::path(o.run_dir) / "config.resolved.toml");
    cfg.output = o.run_dir;
  } else if (!o.config.empty()) {
    cfg = rcav::load_config(o.config);
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw rcav::ConfigError("--set expects key=value, got " + kv);
    rcav::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.layers.empty()) cfg.rcav.layers = o.layers;
  if (o.alpha) cfg.rcav.alpha = *o.alpha;
  if (o.method) cfg.rcav.method = rcav::parse_method(*o.method);
  if (o.null_method) cfg.rcav.null = rcav::parse_null_method(*o.null_method);
  if (o.permutations) cfg.rcav.permutations = *o.permutations;
  if (o.sig) cfg.rcav.sig = *o.sig;
  if (o.percentile) cfg.metrics.binarize_percentile = *o.percentile;
  if (o.lambda) cfg.dataset.lambda = *o.lambda;
  if (o.delta) cfg.dataset.delta = *o.delta;
  if (o.kind) cfg.dataset.kind = rcav::parse_benchmark(*o.kind);
  if (o.output) cfg.output = *o.output;
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Concept sensitivity testing with robust concept activation vectors"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "Config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--layer", o.layers, "Probe layer (repeatable)");
    sub->add_option("--alpha", o.alpha, "Perturbation step size (default 10)");
    sub->add_option("--method", o.method, "rcav, tcav-grad or tcav-cosine");
    sub->add_option("--null", o.null_method, "permutation, uniform or ttest");
    sub->add_option("--permutations", o.permutations, "Null vectors per test (default 500)");
    sub->add_option("--sig", o.sig, "Significance threshold (default 0.05)");
    sub->add_option("--percentile", o.percentile, "Ground-truth binarization percentile (default 75)");
    sub->add_option("--lambda", o.lambda, "Texture interpolation for ground truth (default 0.1)");
    sub->add_option("--delta", o.delta, "Contrast change for ground truth (default 0.03)");
    sub->add_option("--kind", o.kind, "Benchmark: contrast or textured");
    sub->add_option("-o,--output", o.output, "Run directory");
    sub->add_option("--set", o.overrides, "Override any config key, e.g. --set model.epochs=10");
    sub->add_flag("--force", o.force, "Replace artifacts made under another config hash");
    sub->add_flag("-q,--quiet", o.quiet, "No progress output");
  };

  struct Stage {
    const char* name;
    const char* help;
    void (rcav::Pipeline::*fn)();
  };
  const std::vector<Stage> stages = {
      {"gen", "Generate the benchmark datasets", &rcav::Pipeline::gen},
      {"train", "Train the model", &rcav::Pipeline::train},
      {"fit-cav", "Fit one CAV per probe layer", &rcav::Pipeline::fit_cav},
      {"score", "Image and dataset sensitivity scores", &rcav::Pipeline::score},
      {"test", "Significance tests", &rcav::Pipeline::test},
      {"metrics", "P_tau, Kendall tau, AUROC and AUPRC against ground truth", &rcav::Pipeline::metrics},
      {"svd", "Rank-1 linearity bound per layer", &rcav::Pipeline::svd},
      {"all", "Every stage in order, then report", &rcav::Pipeline::all},
  };
  std::vector<std::pair<CLI::App*, void (rcav::Pipeline::*)()>> subs;
  for (const auto& s : stages) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    subs.emplace_back(sub, s.fn);
  }
  auto* report = app.add_subcommand("report", "Summary table of an existing run directory");
  report->add_option("run_dir", o.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_flag("-q,--quiet", o.quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  rcav::Pipeline pipeline(resolve(o), o.force);
  if (!o.quiet) pipeline.set_log([](const std::string& m) { std::cerr << m << "\n"; });
  if (report->parsed()) {
    pipeline.report();
    return 0;
  }
  for (const auto& [sub, fn] : subs) {
    if (sub->parsed()) (pipeline.*fn)();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const rcav::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const rcav::DegenerateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const rcav::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const rcav::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
