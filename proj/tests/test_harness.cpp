#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "harness/config.hpp"
#include "harness/experiments.hpp"
#include "harness/manifest.hpp"
#include "wwtp/plant/io.hpp"

using namespace wwtp;
using namespace wwtp::harness;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  merge_json(c, json::parse(R"({
    "collect": {"n_samples": 400, "episode_days": 1},
    "train": {"epochs": 2, "latent": 4, "hidden": [8], "horizon": 8, "batch": 32},
    "evaluate": {"days": 0.125, "weathers": ["dry"]},
    "empc": {"horizon": 8}
  })"));
  c.out = out;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("wwtp_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, OverlayKnownKeys) {
  ExperimentConfig c;
  merge_json(c, json::parse(R"({"seed": 5, "train": {"epochs": 3, "hidden": [4, 4]},
                               "evaluate": {"weathers": ["storm"]}, "plant": {"q_w": 400}})"));
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.hidden, (std::vector<int>{4, 4}));
  EXPECT_EQ(c.train.batch, 128);
  ASSERT_EQ(c.evaluate.weathers.size(), 1u);
  EXPECT_EQ(c.evaluate.weathers[0], influent::Weather::Storm);
  EXPECT_EQ(c.plant["q_w"], 400);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  ExperimentConfig c;
  EXPECT_THROW(merge_json(c, json::parse(R"({"epochs": 3})")), std::invalid_argument);
  EXPECT_THROW(merge_json(c, json::parse(R"({"train": {"epoch": 3}})")), std::invalid_argument);
  EXPECT_THROW(merge_json(c, json::parse(R"({"plant": {"nope": 1}})")), std::invalid_argument);
  EXPECT_THROW(merge_json(c, json::parse(R"({"threads": 0})")), std::invalid_argument);
  EXPECT_THROW(merge_json(c, json::parse(R"({"evaluate": {"weathers": ["hail"]}})")),
               std::invalid_argument);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig a;
  a.apply_paper_scale();
  a.sensitivity.lr = {0.5};
  ExperimentConfig b;
  merge_json(b, to_json(a));
  EXPECT_EQ(to_json(b), to_json(a));
  EXPECT_EQ(b.collect.n_samples, 100000u);
  EXPECT_EQ(b.train.epochs, 400);
  EXPECT_EQ(b.evaluate.days, 14.0);
}

TEST(Config, EnvironmentOverrides) {
  std::map<std::string, std::string> env{{"WWTP_TRAIN_EPOCHS", "7"},
                                         {"WWTP_EVALUATE_DAYS", "1.5"},
                                         {"WWTP_OUT", "/tmp/x"},
                                         {"WWTP_EMPC_R", "[1, 2]"},
                                         {"WWTP_PLANT", "{\"q_r\": 18000}"},
                                         {"OTHER", "1"}};
  auto getenv = [&](const char* n) -> const char* {
    auto it = env.find(n);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  ExperimentConfig c;
  const auto used = apply_env(c, getenv);
  EXPECT_EQ(used.size(), 4u);
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.evaluate.days, 1.5);
  EXPECT_EQ(c.out, "/tmp/x");
  EXPECT_EQ(c.empc.R[1], 2.0);
  env["WWTP_TRAIN_EPOCHS"] = "many";
  ExperimentConfig d;
  EXPECT_THROW(apply_env(d, getenv), std::invalid_argument);
}

TEST(Config, FileThenEnvironmentPrecedence) {
  const auto dir = scratch("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"train": {"epochs": 3, "batch": 16}})";
  auto getenv = [](const char* n) -> const char* {
    return std::string(n) == "WWTP_TRAIN_EPOCHS" ? "9" : nullptr;
  };
  const auto c = load_config(dir / "c.json", true, getenv);
  EXPECT_EQ(c.train.epochs, 9);
  EXPECT_EQ(c.train.batch, 16);
  EXPECT_EQ(c.collect.n_samples, 100000u);
  std::ofstream(dir / "bad.json") << "{ nope";
  EXPECT_THROW(load_config(dir / "bad.json", false, nullptr), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Manifest, HashesAreStable) {
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
  const auto dir = scratch("manifest");
  fs::create_directories(dir);
  std::ofstream(dir / "out.csv") << "a,b\n1,2\n";
  Manifest m{"test", json{{"k", 1}}, {{"seed", 3}}, {}, {"out.csv"}, {}};
  write_manifest(dir, m);
  const auto first = slurp(dir / "manifest.json");
  write_manifest(dir, m);
  EXPECT_EQ(slurp(dir / "manifest.json"), first);
  const auto j = json::parse(first);
  EXPECT_EQ(j["outputs"][0]["hash"], hex64(hash_file(dir / "out.csv")));
  m.config["k"] = 2;
  write_manifest(dir, m);
  EXPECT_NE(json::parse(slurp(dir / "manifest.json"))["input_hash"], j["input_hash"]);
  fs::remove_all(dir);
}

TEST(LossBand, Statistics) {
  std::vector<std::vector<dioko::EpochRecord>> curves{
      {{1, 1.0, 4.0}, {2, 0.5, 2.0}}, {{1, 3.0, 6.0}, {2, 1.5, 2.0}}};
  const auto band = loss_band(curves);
  ASSERT_EQ(band.size(), 2u);
  EXPECT_DOUBLE_EQ(band[0].train_mean, 2.0);
  EXPECT_DOUBLE_EQ(band[0].train_min, 1.0);
  EXPECT_DOUBLE_EQ(band[0].train_max, 3.0);
  EXPECT_DOUBLE_EQ(band[0].val_mean, 5.0);
  EXPECT_NEAR(band[0].val_std, std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(band[1].val_std, 0.0);
  std::ostringstream out;
  write_loss_band_csv(out, band);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "epoch,train_mean,train_std,train_min,train_max,val_mean,val_std,val_min,val_max");
}

TEST(Sensitivity, RankingFlagsWorstAndDiverged) {
  std::vector<SensitivityRow> rows(4);
  rows[0] = {"lr", 1e-5, 60, 10, 5.0, 5.0, "ok", "", ""};
  rows[1] = {"lr", 1e-2, 60, 10, 0.0, 0.0, "diverged", "", "nan"};
  rows[2] = {"lr", 1e-3, 60, 10, 0.5, 0.4, "ok", "", ""};
  rows[3] = {"lr", 1e-4, 60, 10, 1.0, 1.0, "ok", "", ""};
  rank_sensitivity(rows);
  EXPECT_EQ(rows[0].lr, 1e-3);
  EXPECT_EQ(rows[1].lr, 1e-4);
  EXPECT_EQ(rows[2].lr, 1e-5);
  EXPECT_EQ(rows[2].flag, "worst");
  EXPECT_EQ(rows[3].status, "diverged");
  EXPECT_EQ(rows[3].flag, "diverged");
  EXPECT_EQ(rows[0].flag, "");
}

TEST(EndToEnd, TinyPipeline) {
  const auto out = scratch("e2e");
  Context ctx(tiny_config(out));
  ctx.quiet = true;
  ASSERT_EQ(cmd_settle(ctx), 0);
  ASSERT_EQ(cmd_collect(ctx), 0);
  ASSERT_EQ(cmd_train(ctx), 0);
  ASSERT_EQ(cmd_evaluate(ctx), 0);
  for (const char* f : {"settle/steady_state.bin", "settle/settle_report.csv", "collect/dataset.bin",
                        "collect/dataset.csv", "train/model.bin", "train/loss_band.csv",
                        "evaluate/evaluate.csv", "evaluate/manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  std::ifstream eval(out / "evaluate" / "evaluate.csv");
  std::string header, line;
  std::getline(eval, header);
  EXPECT_EQ(header,
            "method,weather,plant,stage_cost,eq,oci,sp,ae,pe,me,mean_solve_ms,median_solve_ms,"
            "max_kkt_residual,fallbacks,status");
  int rows = 0;
  while (std::getline(eval, line)) ++rows;
  EXPECT_EQ(rows, 3);

  // same config, fresh context: collect and train outputs are reproduced byte for byte
  const auto collect_manifest = slurp(out / "collect" / "manifest.json");
  const auto model_bytes = slurp(out / "train" / "model.bin");
  Context again(tiny_config(out));
  again.quiet = true;
  ASSERT_EQ(cmd_collect(again), 0);
  ASSERT_EQ(cmd_train(again), 0);
  EXPECT_EQ(slurp(out / "collect" / "manifest.json"), collect_manifest);
  EXPECT_EQ(slurp(out / "train" / "model.bin"), model_bytes);
  fs::remove_all(out);
}

TEST(EndToEnd, ReusesSavedInputs) {
  const auto out = scratch("reuse");
  {
    Context ctx(tiny_config(out));
    ctx.quiet = true;
    ASSERT_EQ(cmd_settle(ctx), 0);
  }
  auto cfg = tiny_config(out);
  cfg.state = out / "settle" / "steady_state.bin";
  Context ctx(cfg);
  ctx.quiet = true;
  EXPECT_EQ(ctx.steady_state(), load_state(cfg.state));
  ASSERT_EQ(ctx.inputs().size(), 1u);
  fs::remove_all(out);
}
