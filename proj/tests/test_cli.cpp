#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hnclass/datagen.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

/// Runs the CLI through the shell, capturing stdout; stderr is discarded.
Run cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + HNCLASS_CLI + std::string(" ") + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "hnclass_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string path(const std::string& name) { return (root_ / name).string(); }

  static inline fs::path root_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  const auto help = cli("--help");
  EXPECT_EQ(help.code, 0);
  for (const char* sub : {"generate", "pretokenize", "build-vocab", "train", "evaluate", "suite", "classify"}) {
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  }
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("generate --bogus").code, 1);
  EXPECT_EQ(cli("generate --per-class 2 --data " + path("tiny")).code, 1);
  EXPECT_EQ(cli("pretokenize --pretokenizer greedy-x /dev/null").code, 1);
  EXPECT_EQ(cli("evaluate --checkpoint " + path("missing.ckpt")).code, 2);
}

TEST_F(Cli, Pretokenize) {
  write_file(path("line.txt"), "rtt 12345ms\n");
  const auto plain = cli("pretokenize --pretokenizer greedy-3 " + path("line.txt"));
  EXPECT_EQ(plain.code, 0);
  EXPECT_EQ(plain.out, "[rtt ]\n[123]\n[45]\n[ms]\n");
  const auto json = cli("pretokenize --json --pretokenizer whitespace < " + path("line.txt"));
  EXPECT_EQ(json.code, 0);
  EXPECT_EQ(nlohmann::json::parse(json.out), nlohmann::json::array({"rtt", "12345ms"}));
}

TEST_F(Cli, GenerateIsDeterministic) {
  ASSERT_EQ(cli("generate --per-class 4 --seed 9 --data " + path("g1")).code, 0);
  ASSERT_EQ(cli("generate --per-class 4 --seed 9", "HNCLASS_DATA_DIR=" + path("g2")).code, 0);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "manifest.json"}) {
    EXPECT_EQ(read_file(root_ / "g1" / f), read_file(root_ / "g2" / f)) << f;
    EXPECT_FALSE(read_file(root_ / "g1" / f).empty()) << f;
  }
  const auto manifest = nlohmann::json::parse(read_file(root_ / "g1" / "manifest.json"));
  EXPECT_EQ(manifest.at("seed"), 9);
  EXPECT_EQ(manifest.at("per_class_count"), 4);
}

TEST_F(Cli, ConfigFileSuppliesDefaultsAndFlagsWin) {
  write_file(path("gen.ini"), "[generate]\nper-class = 3\nseed = 5\n");
  ASSERT_EQ(cli("--config " + path("gen.ini") + " generate --data " + path("c1")).code, 0);
  EXPECT_EQ(nlohmann::json::parse(read_file(root_ / "c1" / "manifest.json")).at("per_class_count"), 3);
  ASSERT_EQ(cli("--config " + path("gen.ini") + " generate --per-class 6 --data " + path("c2")).code, 0);
  const auto m = nlohmann::json::parse(read_file(root_ / "c2" / "manifest.json"));
  EXPECT_EQ(m.at("per_class_count"), 6);
  EXPECT_EQ(m.at("seed"), 5);
}

TEST_F(Cli, TrainEvaluateClassify) {
  const std::string data = path("d");
  ASSERT_EQ(cli("generate --per-class 30 --seed 3 --data " + data).code, 0);
  ASSERT_EQ(cli("build-vocab --pretokenizer greedy-3 --data " + data).code, 0);
  EXPECT_TRUE(fs::exists(fs::path(data) / "vocab-greedy-3.txt"));

  const std::string ckpt = path("bow.ckpt");
  ASSERT_EQ(cli("train --quiet --model bow --pretokenizer greedy-3 --lr 1e-2 --epochs 15 --batch-size 16 --data " +
                data + " --checkpoint " + ckpt)
                .code,
            0);
  EXPECT_TRUE(fs::exists(ckpt + ".history.jsonl"));

  const auto test_eval = cli("evaluate --checkpoint " + ckpt + " --split test --out " + path("eval") + " --data " + data);
  ASSERT_EQ(test_eval.code, 0);
  EXPECT_NE(test_eval.out.find("accuracy"), std::string::npos);
  const auto report = nlohmann::json::parse(read_file(root_ / "eval" / "bow.test.report.json"));
  const auto train_eval = cli("evaluate --checkpoint " + ckpt + " --split train --out " + path("eval") + " --data " + data);
  ASSERT_EQ(train_eval.code, 0);
  const auto train_report = nlohmann::json::parse(read_file(root_ / "eval" / "bow.train.report.json"));
  EXPECT_GE(train_report.at("accuracy").get<double>(), report.at("accuracy").get<double>());

  const auto held_out = hnclass::generate_sample(hnclass::ProblemClass::kNoDefaultRoute, 987654321);
  write_file(path("sample.log"), held_out.text);
  const auto json = cli("classify --json --checkpoint " + ckpt + " " + path("sample.log"));
  ASSERT_EQ(json.code, 0);
  const auto j = nlohmann::json::parse(json.out);
  EXPECT_EQ(j.at("label"), "NO_DEFAULT_ROUTE");
  double sum = 0.0;
  for (const auto& [name, p] : j.at("probabilities").items()) sum += p.get<double>();
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_EQ(j.at("probabilities").size(), 11u);

  const auto text = cli("classify --checkpoint " + ckpt + " < " + path("sample.log"));
  EXPECT_EQ(text.code, 0);
  EXPECT_NE(text.out.find("NO_DEFAULT_ROUTE"), std::string::npos);

  auto bytes = read_file(ckpt);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 1);
  write_file(path("bad.ckpt"), bytes);
  EXPECT_EQ(cli("classify --checkpoint " + path("bad.ckpt") + " " + path("sample.log")).code, 2);

  write_file(path("other-vocab.txt"), "<PAD>\n<UNK>\nx\n");
  EXPECT_EQ(cli("classify --checkpoint " + ckpt + " --vocab " + path("other-vocab.txt") + " " + path("sample.log")).code,
            2);
}

TEST_F(Cli, TrainTransformerTiny) {
  const std::string data = path("t");
  ASSERT_EQ(cli("generate --per-class 5 --seed 4 --data " + data).code, 0);
  const std::string ckpt = path("tf.ckpt");
  ASSERT_EQ(cli("train --quiet --model transformer --pretokenizer whitespace --seq-len 16 --embed-dim 8 --heads 2 "
                "--blocks 1 --ffn-dim 16 --epochs 1 --data " +
                data + " --checkpoint " + ckpt)
                .code,
            0);
  EXPECT_EQ(cli("evaluate --checkpoint " + ckpt + " --data " + data).code, 0);
  EXPECT_EQ(cli("train --quiet --model transformer --embed-dim 10 --heads 3 --data " + data).code, 1);
}
