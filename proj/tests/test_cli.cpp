#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "driftcast/cli.hpp"

using namespace driftcast;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "driftcast");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

/// Temp workspace holding a small synthetic corpus.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "driftcast_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    write(root_ / "synth.json", R"({"n_users": 40, "statuses_per_user": 6, "positive_rate": 0.5})");
    write(root_ / "hyper.json", R"({"I": 4, "eta": 1e-4, "max_iters": 5})");
    ASSERT_EQ(run({"synth", "--config", p("synth.json"), "--out", p("data"), "--seed", "2"}), 0);
    ASSERT_EQ(run({"ingest", "--posts", p("data/posts.jsonl"), "--interactions", p("data/interactions.jsonl"),
                   "--out", p("corpus")}),
              0);
    ASSERT_EQ(run({"train", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--out", p("models")}), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string p(const std::string& rel) { return (root_ / rel).string(); }
  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST(CliDigest, Sha256KnownAnswer) {
  const auto f = fs::temp_directory_path() / "driftcast_sha.txt";
  write(f, "abc");
  EXPECT_EQ(cli::sha256_file(f), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(f);
}

TEST(CliNames, SafeNameEscapes) {
  EXPECT_EQ(cli::safe_name("u001"), "u001");
  EXPECT_EQ(cli::safe_name("a/b"), "a%2Fb");
  EXPECT_EQ(cli::safe_name(".."), "%2E.");
}

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_EQ(run({"train", "--help"}), 0);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"synth", "--out", p("x"), "--bogus"}), 2);
  EXPECT_EQ(run({"analyze", "--corpus", p("corpus"), "--mode", "bayes"}), 2);
  EXPECT_EQ(run({"evaluate", "--report", p("r.json")}), 2);
  EXPECT_EQ(run({"evaluate", "--corpus", p("corpus"), "--train-fraction", "1.5", "--report", p("r.json")}), 2);
}

TEST_F(CliTest, MalformedLineIsASchemaError) {
  std::istringstream posts(slurp(p("data/posts.jsonl")));
  std::string line, head;
  for (int i = 0; i < 6 && std::getline(posts, line); ++i) head += line + '\n';
  write(root_ / "bad.jsonl", head + "{\"user_id\": 5, \"ts\": 1, \"text\": \"x\"}\n");
  testing::internal::CaptureStderr();
  EXPECT_EQ(run({"ingest", "--posts", p("bad.jsonl"), "--interactions", p("data/interactions.jsonl"), "--out",
                 p("bad_corpus")}),
            2);
  EXPECT_NE(testing::internal::GetCapturedStderr().find("bad.jsonl:7"), std::string::npos);
}

TEST_F(CliTest, BadConfigIsAUsageError) {
  write(root_ / "neg.json", R"({"I": -1})");
  EXPECT_EQ(run({"train", "--corpus", p("corpus"), "--hyper", p("neg.json"), "--out", p("m_neg")}), 2);
  write(root_ / "typo.json", R"({"n_userz": 3})");
  EXPECT_EQ(run({"synth", "--config", p("typo.json"), "--out", p("s_typo")}), 2);
}

TEST_F(CliTest, IngestIsDeterministic) {
  ASSERT_EQ(run({"ingest", "--posts", p("data/posts.jsonl"), "--interactions", p("data/interactions.jsonl"), "--out",
                 p("corpus2")}),
            0);
  for (const auto& e : fs::directory_iterator(root_ / "corpus")) {
    if (e.path().filename() == cli::kManifestName) continue;
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "corpus2" / e.path().filename())) << e.path();
  }
}

TEST_F(CliTest, ManifestDescribesTheRun) {
  ASSERT_EQ(run({"train", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--out", p("m_man")}), 0);
  const auto j = nlohmann::json::parse(slurp(root_ / "m_man" / cli::kManifestName));
  EXPECT_EQ(j.at("command"), "train");
  EXPECT_EQ(j.at("version"), kVersion);
  EXPECT_EQ(j.at("seed"), 0);
  EXPECT_EQ(j.at("config_paths").at(0), p("hyper.json"));
  EXPECT_EQ(j.at("input_digests").at(fs::path(p("hyper.json")).generic_string()),
            cli::sha256_file(p("hyper.json")));
  EXPECT_GE(j.at("duration_seconds").get<double>(), 0.0);
  EXPECT_EQ(j.at("output_digests").size(), 41u);  // 40 models plus the summary
}

TEST_F(CliTest, TrainIsIndependentOfJobs) {
  ASSERT_EQ(run({"train", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--out", p("m1"), "--jobs", "1"}), 0);
  ASSERT_EQ(run({"train", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--out", p("m3"), "--jobs", "3"}), 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(root_ / "m1" / cli::kModelsSubdir)) {
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "m3" / cli::kModelsSubdir / e.path().filename()));
    ++n;
  }
  EXPECT_EQ(n, 40u);
}

TEST_F(CliTest, AblationChangesModels) {
  ASSERT_EQ(run({"train", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--out", p("m_full")}), 0);
  ASSERT_EQ(
      run({"train", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--out", p("m_int"), "--ablation-int"}), 0);
  std::size_t differ = 0;
  for (const auto& e : fs::directory_iterator(root_ / "m_full" / cli::kModelsSubdir)) {
    const auto a = nlohmann::json::parse(slurp(e.path()));
    const auto b = nlohmann::json::parse(slurp(root_ / "m_int" / cli::kModelsSubdir / e.path().filename()));
    differ += a.at("m") != b.at("m");
    EXPECT_TRUE(b.at("hyper").at("ablation_int").get<bool>());
  }
  EXPECT_GT(differ, 0u);
}

TEST_F(CliTest, MostlyFailingTrainingExitsNonzero) {
  write(root_ / "huge_sigma.json", R"({"I": 3, "sigma_min": 1e300})");
  testing::internal::CaptureStderr();
  EXPECT_EQ(run({"train", "--corpus", p("corpus"), "--hyper", p("huge_sigma.json"), "--out", p("m_fail")}), 1);
  testing::internal::GetCapturedStderr();
  const auto summary = nlohmann::json::parse(slurp(root_ / "m_fail" / cli::kTrainSummary));
  EXPECT_EQ(summary.at("n_trained"), 0);
  EXPECT_EQ(summary.at("failed").size(), 40u);
}

TEST_F(CliTest, EvaluateFromModels) {
  ASSERT_EQ(run({"evaluate", "--models", p("models"), "--report", p("eval.json")}), 0);
  const auto j = nlohmann::json::parse(slurp(root_ / "eval.json"));
  ASSERT_EQ(j.at("reports").size(), 2u);
  EXPECT_EQ(j.at("reports").at(0).at("method"), "full");
  EXPECT_EQ(j.at("reports").at(1).at("method"), "Random");
  EXPECT_TRUE(fs::exists(p("eval.json") + "." + cli::kManifestName));
}

TEST_F(CliTest, EvaluateSweepsShapeTheReport) {
  ASSERT_EQ(run({"evaluate", "--models", p("models"), "--train-fraction", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
                 "--no-random", "--report", p("fractions.json")}),
            0);
  EXPECT_EQ(nlohmann::json::parse(slurp(root_ / "fractions.json")).at("reports").size(), 9u);

  ASSERT_EQ(run({"evaluate", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--wreg-grid",
                 "0,0.1,0.2,0.5,1,2,5,10", "--no-ablation", "--no-random", "--jobs", "2", "--report", p("grid.json")}),
            0);
  const auto grid = nlohmann::json::parse(slurp(root_ / "grid.json")).at("reports");
  ASSERT_EQ(grid.size(), 8u);
  EXPECT_EQ(grid.at(7).at("w_reg"), 10.0);
}

TEST_F(CliTest, EvaluateIsIndependentOfJobs) {
  for (const char* jobs : {"1", "3"})
    ASSERT_EQ(run({"evaluate", "--corpus", p("corpus"), "--hyper", p("hyper.json"), "--wreg-grid", "0,1",
                   "--train-fraction", "0.4,0.6", "--jobs", jobs, "--report", p(std::string("ev_j") + jobs + ".json")}),
              0);
  EXPECT_EQ(slurp(root_ / "ev_j1.json"), slurp(root_ / "ev_j3.json"));
}

TEST_F(CliTest, AnalyzeWritesReport) {
  ASSERT_EQ(run({"analyze", "--corpus", p("corpus"), "--mode", "paired", "--seed", "4", "--report", p("post.json")}),
            0);
  const auto j = nlohmann::json::parse(slurp(root_ / "post.json"));
  EXPECT_EQ(j.at("mode"), "paired");
  EXPECT_EQ(j.at("seed"), 4);
}

TEST_F(CliTest, SynthSeedFlagOverridesConfig) {
  ASSERT_EQ(run({"synth", "--config", p("synth.json"), "--out", p("data_again"), "--seed", "2"}), 0);
  EXPECT_EQ(slurp(root_ / "data" / "posts.jsonl"), slurp(root_ / "data_again" / "posts.jsonl"));
  ASSERT_EQ(run({"synth", "--config", p("synth.json"), "--out", p("data_other"), "--seed", "9"}), 0);
  EXPECT_NE(slurp(root_ / "data" / "posts.jsonl"), slurp(root_ / "data_other" / "posts.jsonl"));
}
