#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "rcav/config.hpp"
#include "rcav/errors.hpp"
#include "rcav/pipeline.hpp"

using namespace rcav;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# smallest config that exercises every stage
seed = 5
[dataset]
kind = "contrast"
train_per_class = 60
val_per_class = 60
[model]
epochs = 1
[rcav]
layers = ["pool2", "gap"]
permutations = 20
concept_per_class = 25
bootstrap = 3
[metrics]
tau_permutations = 50
)";

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rcav_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny(const fs::path& out) {
  auto cfg = parse_config(kTiny);
  cfg.output = out.string();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".tsv") out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(RCAV_CLI) + " " + args + " -q > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(ConfigGrammar, ParsesEveryValueKind) {
  const auto t = parse_config_table(
      "top = 1\n[a]\ns = \"x\\ty\"  # trailing comment\nn = -2.5e1\nb = true\narr = [\"p\", \"q\"]\n\n");
  EXPECT_EQ(t.at("top").kind, ConfigValue::Kind::integer);
  EXPECT_EQ(t.at("a.s").text, "x\ty");
  EXPECT_EQ(t.at("a.n").kind, ConfigValue::Kind::number);
  EXPECT_EQ(t.at("a.b").kind, ConfigValue::Kind::boolean);
  ASSERT_EQ(t.at("a.arr").items.size(), 2u);
  EXPECT_EQ(t.at("a.arr").items[1].text, "q");
}

TEST(ConfigGrammar, ErrorsCarryTheLineNumber) {
  for (const auto& [text, line] : std::vector<std::pair<std::string, int>>{
           {"seed = 1\n[rcav\n", 2}, {"seed = 1\n\nalpha 3\n", 3}, {"x = \"open\n", 1}, {"[a]\nk = [1,\n", 2}}) {
    try {
      parse_config_table(text);
      ADD_FAILURE() << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line)), std::string::npos) << e.what();
    }
  }
}

TEST(ConfigGrammar, UnknownKeysAndBadTypesAreRejected) {
  EXPECT_THROW(parse_config("[rcav]\nalpah = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[rcav]\nalpha = \"ten\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[rcav]\npermutations = -4\n"), ConfigError);
  EXPECT_THROW(parse_config("[rcav]\nalpha = 0\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("[rcav]\nmethod = \"magic\"\n"), ConfigError);
  RunConfig cfg;
  EXPECT_THROW(apply_override(cfg, "model.nope", "1"), ConfigError);
}

TEST(ConfigGrammar, MissingTextureAssignmentNamesTheClass) {
  try {
    parse_config("[dataset]\nkind = \"textured\"\nassignment = [\"stripe\"]\n").validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos) << e.what();
  }
}

TEST(ConfigGrammar, CanonicalTextRoundTrips) {
  auto cfg = parse_config(kTiny);
  apply_override(cfg, "rcav.alpha", "2.5");
  apply_override(cfg, "metrics.signed", "true");
  const auto text = cfg.to_toml();
  const auto back = parse_config(text);
  EXPECT_EQ(back.to_toml(), text);
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_EQ(back.rcav.alpha, 2.5);
  EXPECT_EQ(back.rcav.layers, (std::vector<std::string>{"pool2", "gap"}));
}

TEST(ConfigHash, ChangesPropagateDownstreamOnly) {
  const auto base = parse_config(kTiny);
  auto alpha = base;
  alpha.rcav.alpha = 1.0;
  EXPECT_EQ(alpha.dataset_hash(), base.dataset_hash());
  EXPECT_EQ(alpha.model_hash(), base.model_hash());
  EXPECT_NE(alpha.rcav_hash(), base.rcav_hash());
  EXPECT_NE(alpha.metrics_hash(), base.metrics_hash());
  EXPECT_EQ(alpha.cav_hash(), base.cav_hash());

  auto layers = base;
  layers.rcav.layers = {"gap"};
  EXPECT_NE(layers.cav_hash(), base.cav_hash());
  EXPECT_NE(layers.rcav_hash(), base.rcav_hash());

  auto pct = base;
  pct.metrics.binarize_percentile = 25;
  EXPECT_EQ(pct.rcav_hash(), base.rcav_hash());
  EXPECT_NE(pct.metrics_hash(), base.metrics_hash());

  auto delta = base;
  delta.dataset.delta = 0.1;
  EXPECT_EQ(delta.model_hash(), base.model_hash());
  EXPECT_NE(delta.metrics_hash(), base.metrics_hash());

  auto data = base;
  data.dataset.train_per_class = 61;
  EXPECT_NE(data.dataset_hash(), base.dataset_hash());
  EXPECT_NE(data.model_hash(), base.model_hash());
  EXPECT_NE(data.rcav_hash(), base.rcav_hash());
  EXPECT_NE(data.metrics_hash(), base.metrics_hash());

  auto seed = base;
  seed.seed = 6;
  EXPECT_NE(seed.dataset_hash(), base.dataset_hash());

  auto out = base;
  out.output = "elsewhere";
  EXPECT_EQ(out.hash(), base.hash());
}

TEST(Pipeline, RerunsAreBitwiseEqual) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  Pipeline(tiny(a)).all();
  Pipeline(tiny(b)).all();
  const auto fa = csv_files(a), fb = csv_files(b);
  EXPECT_GE(fa.size(), 7u);
  EXPECT_EQ(fa, fb);
  // Every CSV names the config hash it came from.
  for (const auto& [name, body] : fa)
    if (name.ends_with(".csv")) EXPECT_TRUE(body.starts_with("# rcav config_hash=")) << name;
}

TEST(Pipeline, StagesAreIdempotent) {
  const auto dir = scratch("idem");
  Pipeline p(tiny(dir));
  p.all();
  const auto before = csv_files(dir);
  const auto stamp = fs::last_write_time(dir / "model" / "fc.weight.rcvt");
  p.all();
  EXPECT_EQ(fs::last_write_time(dir / "model" / "fc.weight.rcvt"), stamp);
  EXPECT_EQ(csv_files(dir), before);
}

TEST(Pipeline, MissingUpstreamArtifactIsNamed) {
  const auto dir = scratch("missing");
  Pipeline p(tiny(dir));
  p.gen();
  try {
    p.score();
    FAIL();
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("model"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, RefusesToMixConfigs) {
  const auto dir = scratch("stale");
  Pipeline(tiny(dir)).all();
  auto changed = tiny(dir);
  changed.model.train.epochs = 2;
  EXPECT_THROW(Pipeline(changed).fit_cav(), StaleArtifactError);
  EXPECT_THROW(Pipeline(changed).train(), StaleArtifactError);
  Pipeline forced(changed, true);
  forced.train();
  forced.fit_cav();
  EXPECT_THROW(Pipeline(tiny(dir)).fit_cav(), StaleArtifactError);
}

TEST(Pipeline, NullMethodsAreDistinguishable) {
  const auto dir = scratch("nulls");
  auto perm = tiny(dir);
  Pipeline(perm).all();
  auto tt = perm;
  tt.rcav.null = NullMethod::ttest;
  Pipeline p(tt);
  p.score();
  p.test();
  const auto a = read_csv_rows(Pipeline(perm).test_dir() / "test.csv");
  const auto b = read_csv_rows(p.test_dir() / "test.csv");
  ASSERT_FALSE(a.empty());
  ASSERT_FALSE(b.empty());
  EXPECT_EQ(a[0][4], "permutation");
  EXPECT_EQ(b[0][4], "ttest");
  EXPECT_NE(Pipeline(perm).test_dir(), p.test_dir());
}

TEST(Pipeline, ReportGathersStageRows) {
  const auto dir = scratch("report");
  Pipeline p(tiny(dir));
  p.all();
  const auto rows = read_csv_rows(p.report_path());
  std::set<std::string> sources, metrics;
  for (const auto& r : rows) {
    sources.insert(r[0]);
    metrics.insert(r[1]);
  }
  EXPECT_EQ(sources, (std::set<std::string>{"test", "metrics", "svd"}));
  for (const char* m : {"S", "p_adjusted", "significant", "p_tau", "kendall_tau", "auroc_p75", "auprc_p75",
                        "explained_fraction"})
    EXPECT_TRUE(metrics.contains(m)) << m;

  // Values are copied, not recomputed.
  const auto svd = read_csv_rows(p.svd_dir() / "linearity.csv");
  for (const auto& s : svd) {
    bool found = false;
    for (const auto& r : rows) found |= r[0] == "svd" && r[1] == s[0] && r[2] == s[1] && r[4] == s[3];
    EXPECT_TRUE(found) << s[0] << " " << s[1];
  }
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto cfg = (dir / "tiny.toml").string();
  std::ofstream(cfg) << kTiny;
  const auto run = (dir / "run").string();

  EXPECT_EQ(cli("score -c " + cfg + " -o " + run), 3);
  EXPECT_EQ(cli("all -c " + cfg + " -o " + run), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "report.csv"));
  EXPECT_TRUE(fs::exists(dir / "run" / "config.resolved.toml"));
  EXPECT_EQ(cli("report " + run), 0);
  EXPECT_EQ(cli("test -c " + cfg + " -o " + run + " --null ttest"), 0);
  EXPECT_EQ(cli("metrics -c " + cfg + " -o " + run + " --percentile 25 --delta 0.1"), 0);

  EXPECT_EQ(cli("score -c " + cfg + " -o " + run + " --bogus"), 2);
  EXPECT_EQ(cli("score -c " + cfg + " -o " + run + " --set rcav.nope=1"), 2);
  EXPECT_EQ(cli("score -c " + cfg + " -o " + run + " --method magic"), 2);
  EXPECT_EQ(cli("fit-cav -c " + cfg + " -o " + run + " --set model.epochs=3"), 2);
  EXPECT_EQ(cli("svd -c " + cfg + " -o " + run + " --delta 0"), 4);
}
