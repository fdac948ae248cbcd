#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const char* kTiny =
    "data.train_sequences = 4\n"
    "data.test_sequences = 2\n"
    "data.seq_len = 3\n"
    "model.grid_height = 8\n"
    "model.grid_width = 8\n"
    "model.channels = 8\n"
    "model.dim = 8\n"
    "model.ffn_dim = 16\n"
    "model.query_dim = 8\n"
    "model.discriminator_hidden = 8\n"
    "train.epochs = 2\n"
    "train.batch_size = 2\n";

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty() && line[0] != '#';
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("deformer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.cfg") << kTiny;
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(DEFORMER_CLI) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, GenerateDataIsDeterministic) {
  ASSERT_EQ(run("generate-data --config " + path("tiny.cfg") + " --out " + path("a")), 0);
  ASSERT_EQ(run("generate-data --config " + path("tiny.cfg") + " --out " + path("b")), 0);
  for (const char* f : {"train.jsonl", "test.jsonl", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_EQ(count_lines(dir_ / "a" / "train.jsonl"), 4u);
  EXPECT_EQ(count_lines(dir_ / "a" / "test.jsonl"), 2u);
}

TEST_F(Cli, TrainEvaluateRoundTrip) {
  ASSERT_EQ(run("generate-data --config " + path("tiny.cfg") + " --out " + path("data")), 0);
  ASSERT_EQ(run("train --config " + path("tiny.cfg") + " --data " + path("data") + " --out " +
                path("run")),
            0);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoint.dfrm"));
  EXPECT_EQ(count_lines(dir_ / "run" / "train_log.csv"), 1u + 4u);
  ASSERT_EQ(run("evaluate --checkpoint " + path("run/checkpoint.dfrm") + " --data " +
                path("data") + " --mode center --out " + path("eval")),
            0);
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "eval_center.json"));
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "eval_center.csv"));
  EXPECT_EQ(count_lines(dir_ / "eval" / "per_joint_center.csv"), 3u);  // header, mean, std
}

TEST_F(Cli, FusionAblationWritesOneRowPerMode) {
  ASSERT_EQ(run("generate-data --config " + path("tiny.cfg") + " --out " + path("data")), 0);
  ASSERT_EQ(run("ablate --grid fusion --config " + path("tiny.cfg") + " --data " + path("data") +
                " --out " + path("abl")),
            0);
  EXPECT_EQ(count_lines(dir_ / "abl" / "fusion_ablation.csv"), 1u + 4u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("gradcheck --scope nope"), 2);
  std::ofstream(dir_ / "bad.cfg") << "bogus.key = 1\n";
  EXPECT_EQ(run("generate-data --config " + path("bad.cfg") + " --out " + path("x")), 2);
  EXPECT_EQ(run("train --config " + path("tiny.cfg") + " --data " + path("missing") + " --out " +
                path("run")),
            3);
  ASSERT_EQ(run("generate-data --config " + path("tiny.cfg") + " --out " + path("data")), 0);
  EXPECT_EQ(run("evaluate --checkpoint " + path("missing.dfrm") + " --data " + path("data")), 5);

  std::ofstream(dir_ / "other.cfg") << kTiny << "data.seq_len = 4\n";
  EXPECT_EQ(run("train --config " + path("other.cfg") + " --data " + path("data") + " --out " +
                path("run")),
            5);
}

}  // namespace
