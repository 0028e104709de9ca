#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "unlimitd/checkpoint.hpp"
#include "unlimitd/report.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string output;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("unlimitd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  RunResult run(const std::string& args, const std::string& env = "") const {
    const std::string log = path("cmd.log");
    const std::string cmd = "cd " + dir_.string() + " && " + env + " " + UNLIMITD_CLI_PATH + " " + args + " > " +
                            log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  static std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }

  // Small network and budget so every CLI test runs in well under a second.
  static constexpr const char* kTinyTrain = "--widths 1,8,8,1 --epochs 12 --n 4 --K 5 --s 3";

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateDataWritesOneLinePerTask) {
  ASSERT_EQ(run("generate-data --cluster sine --N 10 --M 50 --seed 1 d.jsonl").code, 0);
  const auto ls = lines(slurp(path("d.jsonl")));
  ASSERT_EQ(ls.size(), 10u);
  const auto first = nlohmann::json::parse(ls[0]);
  EXPECT_EQ(first.at("kind"), "sine");
  EXPECT_EQ(first.at("x").size(), 50u);
  EXPECT_TRUE(fs::exists(path("d.manifest.json")));
}

TEST_F(Cli, GenerateDataIsDeterministicAndGuardsExistingFiles) {
  ASSERT_EQ(run("generate-data --N 4 --M 6 --seed 3 a.jsonl").code, 0);
  ASSERT_EQ(run("generate-data --N 4 --M 6 --seed 3 b.jsonl").code, 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  const RunResult again = run("generate-data --N 4 --M 6 --seed 4 a.jsonl");
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.output.find("--force"), std::string::npos);
  EXPECT_EQ(run("generate-data --N 4 --M 6 --seed 4 --force a.jsonl").code, 0);
  EXPECT_NE(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("generate-data --N 0 x.jsonl").code, 2);
  EXPECT_EQ(run("train --no-such-flag").code, 2);
  EXPECT_EQ(run("").code, 2);
  const RunResult r = run("train --variant i --alpha 2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("same covariance function"), std::string::npos) << r.output;
  EXPECT_EQ(run("train --model maml --s 3").code, 2);
}

TEST_F(Cli, ConfigFileRejectsUnknownKeysAndFlagsOverride) {
  write("bad.json", R"({"train": {"epochs": 3, "bogus": 1}})");
  const RunResult bad = run("train --config bad.json");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("bogus"), std::string::npos);
  write("top.json", R"({"trian": {}})");
  EXPECT_EQ(run("train --config top.json").code, 2);

  write("cfg.json", R"({"train": {"epochs": 3, "layer_widths": [1, 8, 8, 1], "variant": "I",
                        "tasks_per_epoch": 4, "context_size": 5}})");
  ASSERT_EQ(run("train --config cfg.json --epochs 4 --out m.json").code, 0);
  const auto ck = unlimitd::load_checkpoint(path("m.json"));
  EXPECT_EQ(ck.epoch, 4);
  EXPECT_EQ(ck.config.variant, unlimitd::Variant::I);
  const auto manifest = nlohmann::json::parse(slurp(path("m.manifest.json")));
  EXPECT_EQ(manifest.at("config").at("train").at("epochs"), 4);
  EXPECT_EQ(manifest.at("command"), "train");
}

TEST_F(Cli, TrainWritesCheckpointTraceAndIsDeterministic) {
  ASSERT_EQ(run(std::string("train --variant f --out a.json ") + kTinyTrain).code, 0);
  ASSERT_EQ(run(std::string("train --variant f --out b.json ") + kTinyTrain).code, 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.trace.csv")), slurp(path("b.trace.csv")));
  const auto trace = lines(slurp(path("a.trace.csv")));
  ASSERT_EQ(trace.size(), 13u);
  EXPECT_EQ(trace[0], "epoch,nll");
  EXPECT_EQ(trace[1].rfind("1,", 0), 0u);
  EXPECT_TRUE(fs::exists(path("a.phase1.json")));
  EXPECT_EQ(unlimitd::load_checkpoint(path("a.phase1.json")).epoch, 6);
}

TEST_F(Cli, ResumeReproducesUninterruptedRun) {
  ASSERT_EQ(run(std::string("train --variant f --out full.json --checkpoint-every 4 ") + kTinyTrain).code, 0);
  ASSERT_TRUE(fs::exists(path("full.epoch8.json")));
  ASSERT_EQ(run("train --resume full.epoch8.json --out resumed.json").code, 0);
  EXPECT_EQ(slurp(path("full.json")), slurp(path("resumed.json")));
  const auto full = lines(slurp(path("full.trace.csv")));
  const auto resumed = lines(slurp(path("resumed.trace.csv")));
  ASSERT_EQ(resumed.size(), 5u);
  EXPECT_EQ(resumed.back(), full.back());
}

TEST_F(Cli, ThreadCountDoesNotChangeResults) {
  ASSERT_EQ(run(std::string("--threads 1 train --variant r --out one.json ") + kTinyTrain).code, 0);
  ASSERT_EQ(run(std::string("train --variant r --out env.json ") + kTinyTrain, "UNLIMITD_THREADS=3").code, 0);
  ASSERT_EQ(run(std::string("train --variant r --out many.json ") + kTinyTrain).code, 0);
  EXPECT_EQ(slurp(path("one.json")), slurp(path("many.json")));
  EXPECT_EQ(slurp(path("env.json")), slurp(path("many.json")));
  EXPECT_EQ(run("--threads -1 train").code, 2);
}

TEST_F(Cli, EvalWritesAucRowsAndManifestHash) {
  ASSERT_EQ(run(std::string("train --variant f --out m.json ") + kTinyTrain).code, 0);
  const std::string args =
      "eval --checkpoint m.json --ood lines,quadratic --K-list 1,2,3,5,10 --uncertainty --n-tasks 10 --n-each 10 "
      "--n-query 20 --out ";
  ASSERT_EQ(run(args + "r1").code, 0);
  ASSERT_EQ(run(args + "r2").code, 0);
  int auc_rows = 0;
  for (const auto& l : lines(slurp(path("r1.csv")))) auc_rows += l.rfind("auc,", 0) == 0;
  EXPECT_EQ(auc_rows, 5);
  EXPECT_EQ(lines(slurp(path("r1.csv")))[0], "metric,K,value,ci95,model,seed");
  const auto report = unlimitd::eval_report_from_json(nlohmann::json::parse(slurp(path("r1.json"))));
  const auto manifest = nlohmann::json::parse(slurp(path("r1.manifest.json")));
  EXPECT_EQ(report.manifest_hash, unlimitd::manifest_hash(manifest));
  EXPECT_EQ(report.model_id, "unlimitd-f");
  EXPECT_EQ(slurp(path("r1.csv")), slurp(path("r2.csv")));
  EXPECT_TRUE(fs::exists(path("r1_mse.svg")));
  EXPECT_TRUE(fs::exists(path("r1_auc.svg")));
}

TEST_F(Cli, EvalAveragesOverProjectionSeeds) {
  for (int seed : {0, 1}) {
    ASSERT_EQ(run(std::string("train --variant r --seed ") + std::to_string(seed) + " --out r" +
                  std::to_string(seed) + ".json " + kTinyTrain)
                  .code,
              0);
  }
  ASSERT_EQ(run("eval --checkpoint r{seed}.json --proj-seeds 0,1 --K-list 1,5 --n-tasks 10 --out agg").code, 0);
  const auto report = unlimitd::eval_report_from_json(nlohmann::json::parse(slurp(path("agg.json"))));
  EXPECT_EQ(report.seeds, (std::vector<std::uint64_t>{0, 1}));
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_TRUE(report.rows[0].mean_mse.has_value());
  EXPECT_EQ(run("eval --checkpoint r0.json --proj-seeds 0,1 --out x").code, 2);
}

TEST_F(Cli, EvalRejectsUncertaintyForMaml) {
  ASSERT_EQ(run("train --model maml --widths 1,8,1 --epochs 3 --n 2 --out maml.json").code, 0);
  const RunResult r = run("eval --checkpoint maml.json --uncertainty --n-tasks 3");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("unsupported"), std::string::npos) << r.output;
  EXPECT_EQ(run("eval --checkpoint maml.json --K-list 1,5 --n-tasks 3 --out ok").code, 0);
  EXPECT_EQ(run("eval --checkpoint missing.json").code, 4);
}

TEST_F(Cli, PredictOutputs) {
  ASSERT_EQ(run(std::string("train --variant f --out m.json ") + kTinyTrain).code, 0);
  write("ctx.csv", "x,y\n0.5,1.2\n");
  write("q.csv", "x\n0.5\n4.5\n");
  write("empty.csv", "x\n");
  ASSERT_EQ(run("predict --checkpoint m.json --context ctx.csv --query empty.csv --out e.csv").code, 0);
  EXPECT_EQ(slurp(path("e.csv")), "x,mean,std\n");

  ASSERT_EQ(run("predict --checkpoint m.json --context ctx.csv --query q.csv --out p.csv").code, 0);
  const auto rows = lines(slurp(path("p.csv")));
  ASSERT_EQ(rows.size(), 3u);
  const double std_near = std::stod(rows[1].substr(rows[1].rfind(',') + 1));
  const double std_far = std::stod(rows[2].substr(rows[2].rfind(',') + 1));
  EXPECT_GT(std_far, std_near);

  write("bad.csv", "x,y\n0.5,1.0\n0.7\n");
  const RunResult bad = run("predict --checkpoint m.json --context bad.csv --query q.csv");
  EXPECT_EQ(bad.code, 4);
  EXPECT_NE(bad.output.find("bad.csv:3:"), std::string::npos) << bad.output;
}

TEST_F(Cli, PredictMixtureAddsClusterColumn) {
  ASSERT_EQ(run(std::string("train --variant r --alpha 2 --cluster sine,line --out mix.json ") + kTinyTrain).code, 0);
  write("ctx.csv", "0.5,1.2\n1.0,0.3\n");
  write("q.csv", "x\n0.0\n");
  ASSERT_EQ(run("predict --checkpoint mix.json --context ctx.csv --query q.csv --out p.csv").code, 0);
  EXPECT_EQ(lines(slurp(path("p.csv")))[0], "x,mean,std,cluster");

  ASSERT_EQ(run("train --model maml --widths 1,8,1 --epochs 3 --n 2 --out maml.json").code, 0);
  ASSERT_EQ(run("predict --checkpoint maml.json --context ctx.csv --query q.csv --out mp.csv").code, 0);
  EXPECT_EQ(lines(slurp(path("mp.csv")))[0], "x,mean");
}
