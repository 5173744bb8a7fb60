#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fsdm/corpus/dataset.hpp"
#include "fsdm/numcore/checkpoint.hpp"
#include "support/overfit.hpp"

namespace fsdm {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using testing::ScratchDir;

struct Run {
  int code;
  std::string out, err;
  json out_json() const { return json::parse(out); }
};

Run fsdm(std::vector<std::string> args) {
  args.insert(args.begin(), "fsdm");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class EnvGuard {
 public:
  EnvGuard(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
  ~EnvGuard() { ::unsetenv(name_); }

 private:
  const char* name_;
};

std::string camrest() { return (testing::data_dir() / "camrest_micro").string(); }

fs::path write_config(const fs::path& dir, json extra = json::object()) {
  json cfg{{"dataset", "camrest"}, {"hidden_dim", 8},   {"embed_dim", 6},
           {"epochs", 2},          {"batch_size", 4},   {"validate", false},
           {"max_train_dialogues", 2}, {"max_response_len", 12}};
  cfg.update(extra);
  fs::create_directories(dir);
  const auto path = dir / "cfg.json";
  std::ofstream(path) << cfg.dump();
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Run train_tiny(const fs::path& dir, const std::string& out, json extra = json::object()) {
  return fsdm({"train", "--config", write_config(dir, extra).string(), "--corpus", camrest(), "--format", "camrest",
               "--output", (dir / out).string()});
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(fsdm({"--help"}).code, cli::kOk);
  EXPECT_EQ(fsdm({}).code, cli::kConfig);
  EXPECT_EQ(fsdm({"frobnicate"}).code, cli::kConfig);
  EXPECT_EQ(fsdm({"train", "--seed", "abc"}).code, cli::kConfig);
}

TEST(Cli, TrainWritesCheckpoint) {
  ScratchDir dir("fsdm_cli_train");
  const auto r = train_tiny(dir.path, "run");
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = r.out_json();
  EXPECT_EQ(j["epochs_run"], 2);
  EXPECT_TRUE(fs::exists(fs::path(j["checkpoint"].get<std::string>()) / numcore::kManifestFile));
  EXPECT_TRUE(fs::exists(dir.path / "run" / "train_log.jsonl"));
}

TEST(Cli, SameSeedGivesIdenticalTensors) {
  ScratchDir dir("fsdm_cli_seed");
  ASSERT_EQ(train_tiny(dir.path, "a").code, cli::kOk);
  ASSERT_EQ(train_tiny(dir.path, "b").code, cli::kOk);
  ASSERT_EQ(fsdm({"train", "--config", (dir.path / "cfg.json").string(), "--corpus", camrest(), "--format",
                  "camrest", "--output", (dir.path / "c").string(), "--seed", "99"})
                .code,
            cli::kOk);
  const auto blob = [&](const char* run) { return slurp(dir.path / run / "model" / numcore::kBlobFile); };
  EXPECT_FALSE(blob("a").empty());
  EXPECT_EQ(blob("a"), blob("b"));
  EXPECT_NE(blob("a"), blob("c"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  ScratchDir dir("fsdm_cli_config");
  EXPECT_EQ(fsdm({"train", "--config", (dir.path / "missing.json").string()}).code, cli::kConfig);
  EXPECT_EQ(train_tiny(dir.path, "x", {{"no_such_key", 1}}).code, cli::kConfig);
  EXPECT_EQ(train_tiny(dir.path, "x", {{"hidden_dim", "wide"}}).code, cli::kConfig);
  EXPECT_EQ(train_tiny(dir.path, "x", {{"dropout_rate", 1.5}}).code, cli::kConfig);
  const auto cfg = write_config(dir.path).string();
  EXPECT_EQ(fsdm({"train", "--config", cfg, "--corpus", (dir.path / "nowhere").string()}).code, cli::kConfig);
  EXPECT_EQ(fsdm({"train", "--config", cfg, "--corpus", camrest(), "--format", "xml"}).code, cli::kConfig);
  EXPECT_EQ(fsdm({"train", "--config", cfg, "--corpus", camrest(), "--format", "kvret"}).code, cli::kConfig);
}

TEST(Cli, DivergenceExitsThree) {
  ScratchDir dir("fsdm_cli_nan");
  const auto r = train_tiny(dir.path, "run", {{"learning_rate", 1e30}, {"epochs", 20}});
  EXPECT_EQ(r.code, cli::kNumeric) << r.err;
  EXPECT_TRUE(fs::exists(dir.path / "run" / "last_good" / numcore::kManifestFile));
}

TEST(Cli, FlagBeatsEnvBeatsConfigFile) {
  ScratchDir dir("fsdm_cli_env");
  const auto cfg = write_config(dir.path, {{"corpus", (dir.path / "from_file").string()}}).string();
  const auto out = (dir.path / "run").string();
  {
    // The config file names a missing corpus; the environment overrides it.
    EXPECT_EQ(fsdm({"train", "--config", cfg, "--format", "camrest", "--output", out}).code, cli::kConfig);
    EnvGuard env("FSDM_CORPUS", camrest());
    EXPECT_EQ(fsdm({"train", "--config", cfg, "--format", "camrest", "--output", out}).code, cli::kOk);
  }
  {
    EnvGuard env("FSDM_CORPUS", (dir.path / "from_env").string());
    EXPECT_EQ(fsdm({"train", "--config", cfg, "--format", "camrest", "--output", out}).code, cli::kConfig);
    EXPECT_EQ(fsdm({"train", "--config", cfg, "--corpus", camrest(), "--format", "camrest", "--output", out}).code,
              cli::kOk);
  }
  {
    EnvGuard env("FSDM_CONFIG", cfg);
    const auto r = fsdm({"train", "--corpus", camrest(), "--format", "camrest", "--output", out});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_EQ(r.out_json()["epochs_run"], 2);
  }
}

TEST(Cli, ConvertWritesCanonicalCorpus) {
  ScratchDir dir("fsdm_cli_convert");
  const auto r = fsdm({"convert", "--corpus", camrest(), "--format", "camrest", "--output", dir.path.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = r.out_json();
  EXPECT_EQ(j["train"], 6);
  EXPECT_EQ(j["dev"], 2);
  EXPECT_EQ(j["test"], 2);
  const auto raw = corpus::load_corpus(camrest(), corpus::Format::camrest);
  const auto canon = corpus::load_corpus(dir.path, corpus::Format::canonical);
  EXPECT_EQ(json(canon.train), json(raw.train));
  EXPECT_EQ(json(canon.test), json(raw.test));
  EXPECT_EQ(kb::tables_to_json(canon.kb), kb::tables_to_json(raw.kb));
}

class CliEvaluate : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new ScratchDir("fsdm_cli_evaluate");
    ASSERT_EQ(train_tiny(dir_->path, "run").code, cli::kOk);
    checkpoint_ = (dir_->path / "run" / "model").string();
  }
  static void TearDownTestSuite() { delete dir_; }
  static inline ScratchDir* dir_ = nullptr;
  static inline std::string checkpoint_;
};

TEST_F(CliEvaluate, ReportsMetricsForSplit) {
  const auto r = fsdm({"evaluate", "--checkpoint", checkpoint_, "--split", "dev"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = r.out_json();
  EXPECT_EQ(j["split"], "dev");
  EXPECT_EQ(j["belief_feed"], "predicted");
  EXPECT_EQ(j["dialogues"], 2);
  for (const char* k : {"bleu", "emr", "succ_f1"}) {
    ASSERT_TRUE(j.contains(k)) << k;
  }
  EXPECT_GE(j["inf"]["f1"].get<double>(), 0.0);
  EXPECT_LE(j["inf"]["f1"].get<double>(), 1.0);
}

TEST_F(CliEvaluate, BeliefFeedIsSelectable) {
  const auto gold = fsdm({"evaluate", "--checkpoint", checkpoint_, "--split", "dev", "--belief-feed", "gold"});
  ASSERT_EQ(gold.code, cli::kOk) << gold.err;
  EXPECT_EQ(gold.out_json()["belief_feed"], "gold");
  EXPECT_EQ(fsdm({"evaluate", "--checkpoint", checkpoint_, "--belief-feed", "oracle"}).code, cli::kConfig);
}

TEST_F(CliEvaluate, TranscriptIsDeterministic) {
  const auto a = dir_->path / "a.json", b = dir_->path / "b.json";
  ASSERT_EQ(fsdm({"evaluate", "--checkpoint", checkpoint_, "--transcript", a.string()}).code, cli::kOk);
  ASSERT_EQ(fsdm({"evaluate", "--checkpoint", checkpoint_, "--transcript", b.string()}).code, cli::kOk);
  EXPECT_FALSE(slurp(a).empty());
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(CliEvaluate, EmptySplitGivesNullMetrics) {
  const auto canon = dir_->path / "canon";
  ASSERT_EQ(fsdm({"convert", "--corpus", camrest(), "--format", "camrest", "--output", canon.string()}).code,
            cli::kOk);
  auto dev = corpus::read_json(canon / "dev.json");
  dev["dialogues"] = json::array();
  std::ofstream(canon / "dev.json") << dev.dump();
  const auto r = fsdm({"evaluate", "--checkpoint", checkpoint_, "--corpus", canon.string(), "--format", "canonical",
                       "--split", "dev"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = r.out_json();
  EXPECT_EQ(j["turns"], 0);
  for (const char* k : {"inf", "req", "bleu", "emr", "succ_f1"}) EXPECT_TRUE(j[k].is_null()) << k;
}

TEST_F(CliEvaluate, SchemaMismatchExitsFour) {
  const auto r = fsdm({"evaluate", "--checkpoint", checkpoint_, "--corpus",
                       (testing::data_dir() / "kvret_micro").string(), "--format", "kvret"});
  EXPECT_EQ(r.code, cli::kCheckpoint) << r.err;
}

TEST_F(CliEvaluate, MissingCheckpointExitsTwo) {
  EXPECT_EQ(fsdm({"evaluate", "--checkpoint", (dir_->path / "none").string()}).code, cli::kConfig);
  EXPECT_EQ(fsdm({"evaluate"}).code, cli::kConfig);
  EXPECT_EQ(fsdm({"evaluate", "--checkpoint", checkpoint_, "--split", "holdout"}).code, cli::kConfig);
}

TEST_F(CliEvaluate, ServeRejectsBadPort) {
  EXPECT_EQ(fsdm({"serve", "--checkpoint", checkpoint_, "--port", "70000"}).code, cli::kConfig);
  EnvGuard env("FSDM_PORT", "eighty");
  EXPECT_EQ(fsdm({"serve", "--checkpoint", checkpoint_}).code, cli::kConfig);
}

}  // namespace
}  // namespace fsdm
