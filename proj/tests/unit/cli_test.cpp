#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ducat/harness/commands.hpp"

namespace ducat::harness {
namespace {

namespace fs = std::filesystem;

constexpr const char* kConfig = R"(run.id = cli
data.classes = 3
data.per_class = 30
data.test_per_class = 20
train.epochs = 3
train.hidden = 16
train.batch_size = 16
train.lr = 0.05
train.lr_decays =
ducat.start_epoch = 1
attack.epsilon = 8/255
attack.step_size = 2/255
attack.steps = 3
)";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ducat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "run.cfg") << kConfig;
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    std::vector<std::string> full{"--config", (dir_ / "run.cfg").string()};
    full.insert(full.end(), args.begin(), args.end());
    out_.str("");
    err_.str("");
    return run_cli(full, out_, err_, no_env());
  }
  std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
  /// Trains into dir_/name and returns the best checkpoint.
  std::string trained(const std::string& name, const std::string& seed = "0") {
    EXPECT_EQ(run({"--seed", seed, "--out", (dir_ / name).string(), "train"}), 0) << err_.str();
    return (dir_ / name / "best.ckpt").string();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, TrainWritesEveryArtefactAndIsReproducible) {
  trained("a");
  for (const char* f : {"config.resolved", "metrics.log", "best.ckpt", "final.ckpt", "eval.csv", "samples.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  }
  trained("b");
  EXPECT_EQ(slurp(dir_ / "a" / "metrics.log"), slurp(dir_ / "b" / "metrics.log"));
  trained("c", "1");
  EXPECT_NE(slurp(dir_ / "a" / "metrics.log"), slurp(dir_ / "c" / "metrics.log"));
  const auto records = read_metrics_log(dir_ / "a" / "metrics.log");
  ASSERT_FALSE(records.empty());
  EXPECT_EQ(records.front().run_id, "cli");
}

TEST_F(CliTest, EvalReportsRecomputableScores) {
  const auto ckpt = trained("a");
  ASSERT_EQ(run({"--out", (dir_ / "e").string(), "--checkpoint", ckpt, "eval"}), 0) << err_.str();
  const auto t = Table::read(dir_ / "e" / "eval.csv");
  ASSERT_FALSE(t.rows.empty());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double c = t.number(r, "clean"), a = t.number(r, "robust");
    EXPECT_NEAR(t.number(r, "mean"), (c + a) / 2, 1e-9);
    EXPECT_NEAR(t.number(r, "nrr"), c + a > 0 ? 2 * c * a / (c + a) : 0.0, 1e-9);
  }
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  std::ofstream(dir_ / "bad.cfg") << "train.epoch = 3\n";
  EXPECT_EQ(run_cli({"--config", (dir_ / "bad.cfg").string(), "train"}, out_, err_, no_env()), 2);
  EXPECT_NE(err_.str().find("train.epoch"), std::string::npos);
  EXPECT_EQ(run({"--checkpoint", (dir_ / "none.ckpt").string(), "eval"}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"ablate", "--grid", "1"}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, AnalysesProduceConsistentTables) {
  const auto a = trained("a", "0"), b = trained("b", "1");
  const auto out = (dir_ / "an").string();
  ASSERT_EQ(run({"--out", out, "--checkpoint", a, "--checkpoint", b, "analyze", "overlap"}), 0) << err_.str();
  const auto overlap = Table::read(dir_ / "an" / "overlap.csv");
  double total = 0;
  for (std::size_t r = 0; r < overlap.rows.size(); ++r) total += overlap.number(r, "count");
  EXPECT_EQ(total, 60);

  ASSERT_EQ(run({"--out", out, "--checkpoint", a, "--checkpoint", b, "analyze", "transfer"}), 0) << err_.str();
  EXPECT_TRUE(fs::exists(dir_ / "an" / "transfer.csv"));
  EXPECT_EQ(run({"--out", out, "--checkpoint", a, "analyze", "transfer"}), 2);

  ASSERT_EQ(run({"--out", out, "--checkpoint", a, "analyze", "confusion"}), 0) << err_.str();
  EXPECT_TRUE(fs::exists(dir_ / "an" / "confusion_0_attacked.csv"));

  std::ofstream(dir_ / "run.cfg", std::ios::app) << "eval.0.steps = 10\neval.0.restarts = 10\neval.0.step_size = 1/255\n";
  ASSERT_EQ(run({"--out", out, "--checkpoint", a, "--checkpoint", b, "analyze", "toycase"}), 0) << err_.str();
  EXPECT_EQ(Table::read(dir_ / "an" / "toycase.csv").rows.size(), 6u);
}

TEST_F(CliTest, AblationOfOneValueEqualsTraining) {
  std::ofstream(dir_ / "run.cfg", std::ios::app) << "ducat.beta1 = 0.5\n";
  trained("plain");
  const auto out = (dir_ / "abl").string();
  ASSERT_EQ(run({"--out", out, "ablate", "--dimension", "beta1", "--grid", "0.5", "--seeds", "0"}), 0) << err_.str();
  fs::path run_dir;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "abl")) {
    if (e.path().filename() == "metrics.log") run_dir = e.path().parent_path();
  }
  ASSERT_FALSE(run_dir.empty());
  EXPECT_EQ(slurp(run_dir / "metrics.log"), slurp(dir_ / "plain" / "metrics.log"));
}

TEST_F(CliTest, AblationGridRowsComeOutInOrder) {
  const auto out = (dir_ / "abl").string();
  ASSERT_EQ(run({"--out", out, "ablate", "--dimension", "beta1", "--grid", "0.5,0.75,1", "--seeds", "0,1"}), 0)
      << err_.str();
  const auto t = Table::read(dir_ / "abl" / "ablate.csv");
  std::vector<std::pair<double, double>> keys;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::pair<double, double> k{t.number(r, "value"), t.number(r, "seed")};
    if (keys.empty() || keys.back() != k) keys.push_back(k);
  }
  const std::vector<std::pair<double, double>> expected{{0.5, 0}, {0.5, 1}, {0.75, 0}, {0.75, 1}, {1, 0}, {1, 1}};
  EXPECT_EQ(keys, expected);
}

TEST_F(CliTest, BudgetSweepStartsAtCleanAccuracy) {
  const auto ckpt = trained("a");
  ASSERT_EQ(run({"--out", (dir_ / "b").string(), "--checkpoint", ckpt, "budget-sweep", "--epsilons", "8/255,0,2/255"}),
            0)
      << err_.str();
  const auto t = Table::read(dir_ / "b" / "budget.csv");
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.number(0, "epsilon"), 0.0);
  EXPECT_EQ(t.number(0, "robust"), t.number(0, "clean"));
  EXPECT_LT(t.number(1, "epsilon"), t.number(2, "epsilon"));
}

TEST_F(CliTest, GeneratedDataLoadsBack) {
  ASSERT_EQ(run({"--out", (dir_ / "d").string(), "gen-data"}), 0) << err_.str();
  const auto train = load_csv(dir_ / "d" / "train.csv");
  EXPECT_EQ(train.size(), 90u);
  std::ofstream(dir_ / "run.cfg", std::ios::app) << "data.kind = csv\ndata.train_csv = " << (dir_ / "d" / "train.csv").string()
                                                 << "\ndata.test_csv = " << (dir_ / "d" / "test.csv").string() << '\n';
  EXPECT_EQ(run({"--out", (dir_ / "csv").string(), "train"}), 0) << err_.str();
}

TEST_F(CliTest, ConfigCommandPrintsParseableSettings) {
  ASSERT_EQ(run({"--seed", "9", "config"}), 0);
  const auto c = parse_config(out_.str());
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.epochs, 3);
  ASSERT_EQ(run({"config", "--keys"}), 0);
  EXPECT_NE(out_.str().find("ducat.beta2"), std::string::npos);
}

}  // namespace
}  // namespace ducat::harness
