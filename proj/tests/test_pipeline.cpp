#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <crackseg/pipeline.hpp>

#include "test_support.hpp"

using namespace crackseg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path pipelines() { return fs::path(CRACKSEG_DATA_DIR) / "pipelines"; }

nlohmann::json small_config(const fs::path& out) {
  return {{"dataset", {{"recipe", (fs::path(CRACKSEG_DATA_DIR) / "recipes" / "frangi_w3.json").string()}}},
          {"methods", {"frangi/w3/recall"}},
          {"tols", {0, 1}},
          {"out", out.string()}};
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CRACKSEG_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(PipelineConfig, UnknownPresetFailsBeforeAnyWork) {
  const fs::path out = testing_support::scratch_dir("pipe") / "run";
  nlohmann::json j = small_config(out);
  j["methods"] = {"frangi/w3/recall", "frangi/w4/recall"};
  EXPECT_THROW(parse_pipeline(j), ConfigError);
  j["methods"] = {"sheet/w{width}/nope"};
  EXPECT_THROW(parse_pipeline(j), ConfigError);
  EXPECT_FALSE(fs::exists(out));
}

TEST(PipelineConfig, RejectsMalformedConfigs) {
  const fs::path out = testing_support::scratch_dir("pipe");
  nlohmann::json j = small_config(out);
  j["methods"] = nlohmann::json::array();
  EXPECT_THROW(parse_pipeline(j), ConfigError);
  j = small_config(out);
  j["methods"] = {"frangi/w3/recall", "frangi/w3/recall"};
  EXPECT_THROW(parse_pipeline(j), ConfigError);
  j = small_config(out);
  j["dataset"] = {{"recipe", "/nonexistent/recipe.json"}};
  EXPECT_THROW(parse_pipeline(j), ConfigError);
  j = small_config(out);
  j["tols"] = {-1};
  EXPECT_THROW(parse_pipeline(j), ConfigError);
  j = small_config(out);
  j["methods"] = {{{"method", "frangi"}, {"params", {{"sigma", 1.5}}}}};
  EXPECT_THROW(parse_pipeline(j), ConfigError);
}

TEST(PipelineConfig, ShippedConfigsValidate) {
  for (const auto& e : fs::directory_iterator(pipelines())) EXPECT_NO_THROW(load_pipeline(e.path())) << e.path();
}

TEST(PipelineConfig, WidthTemplateAndLabels) {
  nlohmann::json j = small_config("/tmp/unused");
  j["methods"] = {"sheet/w{width}/precision", {{"preset", "hp/w3/precision"}, {"label", "hp-custom"}},
                  {{"method", "frangi"}, {"params", {{"sigma", 1.5}, {"alpha", 0.5}, {"beta", 0.5}, {"t2", 20}}}}};
  const PipelineConfig c = parse_pipeline(j);
  ASSERT_EQ(c.methods.size(), 3u);
  EXPECT_EQ(c.methods[0].label, "sheet/precision");
  EXPECT_EQ(c.methods[1].label, "hp-custom");
  EXPECT_EQ(c.methods[2].label, "frangi");
  EXPECT_EQ(detail::instantiate(c.methods[0], 1, PresetTable::builtin()).preset, "sheet/w1/precision");
  EXPECT_EQ(detail::instantiate(c.methods[0], 5, PresetTable::builtin()).preset, "sheet/w5/precision");
}

TEST(PipelineConfig, HpPresetResolvesToTableValues) {
  nlohmann::json j = small_config("/tmp/unused");
  j["methods"] = {"hp/w3/precision"};
  const MethodConfig c = *parse_pipeline(j).methods[0].fixed;
  EXPECT_EQ(c.params.at("epsilon"), -0.5);
  EXPECT_EQ(c.params.at("tau"), 4);
  EXPECT_EQ(c.params.at("f"), 0.6);
  EXPECT_EQ(c.params.at("W"), 3);
}

TEST(Pipeline, SixImagesTwoTolerancesGiveTwelveRows) {
  const fs::path out = testing_support::scratch_dir("pipe") / "run";
  const PipelineResult r = run_pipeline(parse_pipeline(small_config(out)));
  EXPECT_EQ(r.rows.size(), 12u);
  std::ifstream is(out / "metrics.csv");
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 13);
  int masks = 0;
  for (const auto& e : fs::directory_iterator(out / "masks" / "frangi_w3_recall"))
    masks += e.path().extension() == ".mask";
  EXPECT_EQ(masks, 6);
  const auto prov = nlohmann::json::parse(slurp(out / "provenance.json"));
  EXPECT_EQ(prov.at("status"), "complete");
  EXPECT_EQ(prov.at("version"), kToolVersion);
  EXPECT_EQ(prov.at("config_hash").get<std::string>().rfind("fnv1a64:", 0), 0u);
  EXPECT_GE(prov.at("stages").size(), 4u);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_FALSE(summary.empty());
}

TEST(Pipeline, RerunIsByteIdentical) {
  const fs::path a = testing_support::scratch_dir("pipe") / "a", b = testing_support::scratch_dir("pipe") / "b";
  run_pipeline(parse_pipeline(small_config(a)));
  run_pipeline(parse_pipeline(small_config(b)));
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  for (const auto& e : fs::recursive_directory_iterator(a / "masks")) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
  }
}

TEST(Pipeline, FailureIsRecordedAsPartial) {
  // Every image is in the eval split, so rf has nothing to train on.
  const fs::path out = testing_support::scratch_dir("pipe") / "run";
  nlohmann::json j = small_config(out);
  j["methods"] = {"rf/w3/precision"};
  EXPECT_THROW(run_pipeline(parse_pipeline(j)), TrainingError);
  const auto prov = nlohmann::json::parse(slurp(out / "provenance.json"));
  EXPECT_EQ(prov.at("status"), "partial");
  EXPECT_EQ(prov.at("failed_stage"), "train");
  EXPECT_FALSE(fs::exists(out / "metrics.csv"));
}

TEST(Cli, ExitCodes) {
  const fs::path dir = testing_support::scratch_dir("cli");
  EXPECT_EQ(cli("--version"), 0);
  EXPECT_EQ(cli("no-such-command"), 2);
  EXPECT_EQ(cli("evaluate --pred /nonexistent.mask --truth /nonexistent.mask"), 3);
  BinaryMask m({4, 4, 4});
  m.set(5);
  write_mask(dir / "a.mask", m);
  write_mask(dir / "b.mask", BinaryMask({4, 4, 5}));
  EXPECT_EQ(cli("evaluate --pred " + (dir / "a.mask").string() + " --truth " + (dir / "b.mask").string()), 3);
  write_volume(dir / "v.vol", Volume({8, 8, 8}, 1.0f));
  EXPECT_EQ(cli("--out " + (dir / "o.mask").string() + " segment --input " + (dir / "v.vol").string() +
                " --preset frangi/w9/recall"),
            2);
  EXPECT_EQ(cli("--out " + (dir / "o.mask").string() + " segment --input " + (dir / "v.vol").string() +
                " --preset frangi/w3/recall"),
            0);
  EXPECT_EQ(read_mask(dir / "o.mask").count(), 0u);
}

TEST(Cli, EvaluateAndReport) {
  const fs::path dir = testing_support::scratch_dir("cli");
  BinaryMask truth({6, 6, 6}), pred({6, 6, 6});
  truth.set(1, 1, 1);
  truth.set(4, 4, 4);
  pred.set(1, 1, 2);
  write_mask(dir / "t.mask", truth);
  write_mask(dir / "p.mask", pred);
  ASSERT_EQ(cli("--out " + (dir / "e.json").string() + " evaluate --pred " + (dir / "p.mask").string() + " --truth " +
                (dir / "t.mask").string() + " --tol 0,1"),
            0);
  const auto e = nlohmann::json::parse(slurp(dir / "e.json"));
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].at("tp"), 0);
  EXPECT_EQ(e[1].at("tp"), 1);
  EXPECT_EQ(e[1].at("fn"), 1);
  EXPECT_EQ(e[1].at("fp"), 0);

  std::ofstream(dir / "m.csv") << "method,width,image_id,tol,precision,recall,f1\n"
                                  "a,3,x,1,1.0,0.5,0.666667\n"
                                  "a,3,y,1,0.5,0.5,0.5\n";
  ASSERT_EQ(cli("--out " + (dir / "s.json").string() + " report --csv " + (dir / "m.csv").string()), 0);
  EXPECT_NE(slurp(dir / "s.json").find("\"a\""), std::string::npos);
  std::ofstream(dir / "bad.csv") << "not,a,metrics,file\n";
  EXPECT_EQ(cli("report --csv " + (dir / "bad.csv").string()), 3);
}
