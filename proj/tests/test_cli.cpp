#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "vlmpar/cli.hpp"
#include "vlmpar/config.hpp"
#include "vlmpar/container.hpp"
#include "vlmpar/dataset.hpp"
#include "vlmpar/weights_io.hpp"

namespace vlmpar {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vlmpar");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

json spec_json(std::size_t n, std::uint64_t seed) {
  return json{{"num_samples", n},
              {"image_hw", 16},
              {"patch_size", 8},
              {"seed", seed},
              {"attributes",
               {{{"name", "top"},
                 {"prompt", "is the top bright?"},
                 {"region", {{"row", 0}, {"col", 0}, {"height", 8}, {"width", 16}}},
                 {"thresholds", {0.5}}},
                {{"name", "corner"},
                 {"prompt", "is the corner bright?"},
                 {"region", {{"row", 8}, {"col", 8}, {"height", 8}, {"width", 8}}},
                 {"thresholds", {0.5}}}}}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::scratch_dir();
    write(dir_ / "spec.json", spec_json(8, 3));
    ASSERT_EQ(cli({"gen-data", "--spec", (dir_ / "spec.json").string(), "--out", data()}).code, 0);
    config_ = json{{"seed", 11},
                   {"model",
                    {{"d_model", 16},
                     {"num_layers", 1},
                     {"num_heads", 2},
                     {"patch_size", 8},
                     {"image_hw", 16},
                     {"max_tokens", 8},
                     {"vocab_size", 32},
                     {"fusion_heads", 2}}},
                   {"train", {{"epochs", 4}, {"batch_size", 4}, {"learning_rate", 0.01}}},
                   {"paths",
                    {{"data", data()},
                     {"weights_out", (dir_ / "run" / "w.vlmw").string()},
                     {"report_out", (dir_ / "run").string()}}}};
    write_config();
  }

  static void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }
  void write_config() { write(dir_ / "config.json", config_); }
  std::string data() const { return (dir_ / "data").string(); }
  std::string config() const { return (dir_ / "config.json").string(); }
  std::string weights() const { return (dir_ / "run" / "w.vlmw").string(); }

  fs::path dir_;
  json config_;
};

TEST_F(CliTest, GenDataWritesDatasetLayout) {
  EXPECT_TRUE(fs::is_directory(dir_ / "data" / "images"));
  EXPECT_TRUE(fs::exists(dir_ / "data" / "annotations.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "data" / "prompts.json"));
  EXPECT_EQ(lines(slurp(dir_ / "data" / "annotations.jsonl")).size(), 8u);
}

TEST_F(CliTest, GenDataIsDeterministic) {
  ASSERT_EQ(cli({"gen-data", "--spec", (dir_ / "spec.json").string(), "--out", (dir_ / "again").string()}).code, 0);
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "data")) {
    if (e.is_regular_file())
      EXPECT_EQ(slurp(e.path()), slurp(dir_ / "again" / fs::relative(e.path(), dir_ / "data")));
  }
}

TEST_F(CliTest, GenDataOverlapFails) {
  json s = spec_json(4, 1);
  s["attributes"][1]["region"] = {{"row", 0}, {"col", 8}, {"height", 8}, {"width", 8}};
  write(dir_ / "bad.json", s);
  const CliRun r = cli({"gen-data", "--spec", (dir_ / "bad.json").string(), "--out", (dir_ / "x").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("region overlap"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainWritesHistoryManifestAndWeights) {
  const CliRun r = cli({"train", "--config", config()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(slurp(dir_ / "run" / "history.csv")).size(), 1u + 4u);
  const json m = json::parse(slurp(dir_ / "run" / "manifest.json"));
  EXPECT_EQ(m["ablation"], "full");
  EXPECT_EQ(m["encoder_checksum"], m["encoder_checksum_after"]);
  EXPECT_EQ(m["resolved_config"]["train"]["optimizer"], "adam");
  EXPECT_EQ(m["resolved_config"]["loss"]["focal_gamma"], 2.0);
  EXPECT_EQ(m["resolved_config"]["model"]["pooling"], "mean");
  EXPECT_TRUE(load_container(weights()).contains("fusion.0.wq"));
}

TEST_F(CliTest, TrainAblationOmitsFusion) {
  ASSERT_EQ(cli({"train", "--config", config(), "--ablation", "no_cross_attention"}).code, 0);
  const json m = json::parse(slurp(dir_ / "run" / "manifest.json"));
  EXPECT_EQ(m["ablation"], "no_cross_attention");
  const TensorContainer c = load_container(weights());
  EXPECT_TRUE(c.contains("head.0.w"));
  for (const auto& e : c.entries()) EXPECT_FALSE(e.name.starts_with("fusion")) << e.name;
}

TEST_F(CliTest, TrainIsByteDeterministic) {
  ASSERT_EQ(cli({"train", "--config", config()}).code, 0);
  const std::string w1 = slurp(weights()), m1 = slurp(dir_ / "run" / "manifest.json"),
                    h1 = slurp(dir_ / "run" / "history.csv");
  ASSERT_EQ(cli({"train", "--config", config()}).code, 0);
  EXPECT_EQ(w1, slurp(weights()));
  EXPECT_EQ(m1, slurp(dir_ / "run" / "manifest.json"));
  EXPECT_EQ(h1, slurp(dir_ / "run" / "history.csv"));
}

TEST_F(CliTest, TrainMissingDatasetFails) {
  config_["paths"]["data"] = (dir_ / "missing").string();
  write_config();
  EXPECT_EQ(cli({"train", "--config", config()}).code, kExitData);
}

TEST_F(CliTest, UnknownConfigKeyIsUsageError) {
  config_["train"]["learning_rat"] = 0.1;
  write_config();
  const CliRun r = cli({"train", "--config", config()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("learning_rat"), std::string::npos);
}

TEST_F(CliTest, EvalPerfectModelAndDeterministicReport) {
  config_["train"]["epochs"] = 150;
  write_config();
  ASSERT_EQ(cli({"train", "--config", config()}).code, 0);
  const std::string report = (dir_ / "eval" / "r.json").string();
  ASSERT_EQ(cli({"eval", "--config", config(), "--weights", weights(), "--data", data(), "--report", report}).code, 0);
  const json j = json::parse(slurp(report));
  EXPECT_EQ(j["mA"], 1.0);
  EXPECT_EQ(j["F1"], 1.0);
  const auto csv = lines(slurp(dir_ / "eval" / "r.csv"));
  EXPECT_EQ(csv.back(), "__aggregate__,,,,1,1");
  const std::string first = slurp(report);
  ASSERT_EQ(cli({"eval", "--config", config(), "--weights", weights(), "--data", data(), "--report", report}).code, 0);
  EXPECT_EQ(first, slurp(report));
}

TEST_F(CliTest, EvalConstantPredictorOnBalancedData) {
  // Hand-built heads: zero weights, bias favouring class 0.
  Dataset d = load_dataset(data());
  RunConfig cfg = RunConfig::from_json(config_);
  cfg.model.attributes = d.attributes;
  Model model = Model::create(cfg.model, Vocab::load(dir_ / "data" / "vocab.txt"), cfg.seed);
  for (auto& h : model.trainable.heads) {
    h.w.fill(0.0);
    h.b = Tensor::vector({1.0, 0.0});
  }
  save_container(model_container(model, true), dir_ / "const.vlmw");
  // Rewrite annotations so each attribute is exactly half positive.
  std::ofstream ann(dir_ / "data" / "annotations.jsonl");
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    json rec{{"id", d.records[i].id}, {"image", d.records[i].image},
             {"labels", {{"top", i % 2}, {"corner", (i / 2) % 2}}}};
    ann << rec.dump() << "\n";
  }
  ann.close();
  const std::string report = (dir_ / "c.json").string();
  ASSERT_EQ(cli({"eval", "--config", config(), "--weights", (dir_ / "const.vlmw").string(), "--data",
                 data(), "--report", report}).code, 0);
  EXPECT_EQ(json::parse(slurp(report))["mA"], 0.5);
}

TEST_F(CliTest, EvalIncompatibleWeightsFails) {
  ASSERT_EQ(cli({"train", "--config", config()}).code, 0);
  config_["model"]["d_model"] = 8;
  write_config();
  const CliRun r = cli({"eval", "--config", config(), "--weights", weights(), "--data", data(), "--report",
                     (dir_ / "r.json").string()});
  EXPECT_NE(r.code, 0);
  std::ofstream(dir_ / "junk.vlmw") << "not a container";
  EXPECT_EQ(cli({"eval", "--config", config(), "--weights", (dir_ / "junk.vlmw").string(), "--data", data(),
                 "--report", (dir_ / "r.json").string()}).code, kExitData);
}

TEST_F(CliTest, AblateTableShapeAndDeltas) {
  const std::string out = (dir_ / "abl").string();
  ASSERT_EQ(cli({"ablate", "--config", config(), "--data", data(), "--report", out}).code, 0);
  const auto rows = lines(slurp(dir_ / "abl" / "ablation.csv"));
  ASSERT_EQ(rows.size(), 1u + 2u + 1u);
  EXPECT_EQ(rows[0], "attribute,no_cross_attention,cross_attention,delta");
  EXPECT_TRUE(rows[3].starts_with("__average__,"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::istringstream in(rows[i]);
    std::string name, a, b, delta;
    std::getline(in, name, ',');
    std::getline(in, a, ',');
    std::getline(in, b, ',');
    std::getline(in, delta, ',');
    EXPECT_NEAR(std::stod(delta), std::stod(b) - std::stod(a), 1e-12);
  }
  const json m = json::parse(slurp(dir_ / "abl" / "manifest.json"));
  EXPECT_EQ(m["runs"]["full"]["seed"], m["shared_seed"]);
  EXPECT_EQ(m["runs"]["no_cross_attention"]["seed"], m["shared_seed"]);
  EXPECT_EQ(m["runs"]["full"]["train_seed"], m["runs"]["no_cross_attention"]["train_seed"]);
}

TEST(CliGradcheck, DeskConfigPasses) {
  const CliRun r = cli({"gradcheck", "--config", std::string(VLMPAR_CONFIG_DIR) + "/desk.json"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("fusion.0.wq"), std::string::npos);
}

TEST(CliGradcheck, TinyToleranceFails) {
  const CliRun r = cli({"gradcheck", "--config", std::string(VLMPAR_CONFIG_DIR) + "/tiny.json", "--tolerance", "1e-12"});
  EXPECT_EQ(r.code, kExitNumeric);
}

TEST(CliGradcheck, InjectedFaultFails) {
  const CliRun r = cli({"gradcheck", "--config", std::string(VLMPAR_CONFIG_DIR) + "/tiny.json", "--inject-gradient-fault"});
  EXPECT_EQ(r.code, kExitNumeric);
}

TEST_F(CliTest, ZeroshotScoresBoundedAndRowsMatchForIdenticalImages) {
  ASSERT_EQ(cli({"train", "--config", config()}).code, 0);
  // Sample 1 becomes a copy of sample 0's image.
  fs::copy_file(dir_ / "data" / "images" / "s000000.vlme", dir_ / "data" / "images" / "s000001.vlme",
                fs::copy_options::overwrite_existing);
  const std::string report = (dir_ / "zs.csv").string();
  ASSERT_EQ(cli({"zeroshot", "--config", config(), "--weights", weights(), "--data", data(), "--report", report}).code, 0);
  const auto rows = lines(slurp(report));
  ASSERT_EQ(rows.size(), 1u + 8u * 2u);
  EXPECT_EQ(rows[0], "sample_id,attribute,score");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double s = std::stod(rows[i].substr(rows[i].rfind(',') + 1));
    EXPECT_LE(std::abs(s), 1.0);
  }
  EXPECT_EQ(rows[1].substr(rows[1].find(',')), rows[3].substr(rows[3].find(',')));
  EXPECT_EQ(rows[2].substr(rows[2].find(',')), rows[4].substr(rows[4].find(',')));
}

TEST_F(CliTest, ZeroshotSingleAttributeSingleSample) {
  json s = spec_json(1, 5);
  s["attributes"].erase(1);
  write(dir_ / "one.json", s);
  ASSERT_EQ(cli({"gen-data", "--spec", (dir_ / "one.json").string(), "--out", (dir_ / "one").string()}).code, 0);
  config_["paths"]["data"] = (dir_ / "one").string();
  write_config();
  ASSERT_EQ(cli({"train", "--config", config()}).code, 0);
  const std::string report = (dir_ / "zs1.csv").string();
  ASSERT_EQ(cli({"zeroshot", "--config", config(), "--weights", weights(), "--data", (dir_ / "one").string(),
                 "--report", report}).code, 0);
  EXPECT_EQ(lines(slurp(report)).size(), 2u);
}

TEST(Cli, MissingSubcommandAndBadFlag) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"train"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--config", "/nonexistent/c.json"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

}  // namespace
}  // namespace vlmpar
