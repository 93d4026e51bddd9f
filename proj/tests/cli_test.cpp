#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pyrseg/cli.hpp"
#include "pyrseg/synth.hpp"

namespace fs = std::filesystem;
using pyrseg::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pyrseg_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// A model and corpus small enough for a few seconds of training.
std::vector<std::string> tiny(const fs::path& corpus) {
  return {"data.root=" + corpus.string(), "data.size=16", "data.train=8", "data.val=4",
          "data.test=4", "model.encoder_widths=4,4,8,8", "model.bottleneck_width=8",
          "model.pvf_kernels=3", "train.epochs=1", "train.batch_size=4"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST(Cli, GradcheckPassesWithSeed) {
  const Outcome o = invoke({"gradcheck", "--seed", "7"});
  EXPECT_EQ(o.code, 0) << o.out << o.err;
  EXPECT_NE(o.out.find("seed = 7"), std::string::npos);
  EXPECT_NE(o.out.find("gradcheck passed"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  const Outcome bad = invoke({"train", "--bogus"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_EQ(bad.err.rfind("error: usage:", 0), 0u) << bad.err;
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
}

TEST(Cli, SizeNotDivisibleByEightIsAConfigError) {
  const Outcome o = invoke({"train", "data.size=20"});
  EXPECT_EQ(o.code, 2);
  EXPECT_EQ(o.err.rfind("error: config:", 0), 0u) << o.err;
  EXPECT_NE(o.err.find("data.size"), std::string::npos);
  const Outcome key = invoke({"train", "train.speed=3"});
  EXPECT_EQ(key.code, 2);
}

TEST(Cli, MissingCorpusIsARuntimeFailure) {
  const Outcome o = invoke({"eval", "--checkpoint", "/nonexistent/ckpt"});
  EXPECT_EQ(o.code, 1);
  EXPECT_EQ(o.err.rfind("error: io:", 0), 0u) << o.err;
}

TEST(Cli, TrainEvalPredictAndReproducibleMetrics) {
  const fs::path dir = scratch("pipeline");
  const auto common = tiny(dir / "corpus");
  ASSERT_EQ(invoke(with({"gen-corpus", "--seed", "3"}, common)).code, 0);

  const Outcome a = invoke(with({"train", "--seed", "5", "--out", (dir / "a").string()}, common));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("# resolved config"), std::string::npos);
  EXPECT_NE(a.out.find("train.seed = 5"), std::string::npos);
  const Outcome b = invoke(with({"train", "--seed", "5", "--out", (dir / "b").string()}, common));
  ASSERT_EQ(b.code, 0) << b.err;
  const std::string csv = slurp(dir / "a" / "metrics.csv");
  EXPECT_EQ(csv, slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(csv.rfind("epoch,lr,train_loss,val_iou,val_dice\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "a" / "config.txt"));

  // The saved config replays the run.
  const Outcome c = invoke({"train", "--config", (dir / "a" / "config.txt").string(), "--out",
                            (dir / "c").string()});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(slurp(dir / "c" / "metrics.csv"), csv);

  const Outcome e = invoke(with({"eval", "--checkpoint", (dir / "a" / "checkpoint").string(), "--split", "test"},
                                {"data.root=" + (dir / "corpus").string()}));
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("test iou"), std::string::npos);

  pyrseg::write_ppm((dir / "in.ppm").string(), pyrseg::Tensor::uniform({1, 3, 21, 34}, 1, 0.f, 1.f));
  const Outcome p = invoke({"predict", "--checkpoint", (dir / "a" / "checkpoint").string(), "--input",
                            (dir / "in.ppm").string(), "--output", (dir / "out.pgm").string()});
  ASSERT_EQ(p.code, 0) << p.err;
  const pyrseg::Tensor mask = pyrseg::read_pgm((dir / "out.pgm").string());
  EXPECT_EQ(mask.shape(), (pyrseg::Shape{1, 1, 21, 34}));
  for (float v : mask.data()) EXPECT_TRUE(v == 0.f || v == 1.f);
  fs::remove_all(dir);
}

TEST(Cli, AblateWritesFiveRows) {
  const fs::path dir = scratch("ablate");
  const auto common = tiny(dir / "corpus");
  ASSERT_EQ(invoke(with({"gen-corpus"}, common)).code, 0);
  const Outcome o = invoke(with({"ablate", "--out", (dir / "out").string()}, common));
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream csv(slurp(dir / "out" / "ablation.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 6);
  fs::remove_all(dir);
}

TEST(Cli, BinaryReportsExitCodes) {
  const char* exe = std::getenv("PYRSEG_CLI");
  if (exe == nullptr) GTEST_SKIP() << "PYRSEG_CLI not set";
  const std::string quiet = " >/dev/null 2>&1";
  auto status = [&](const std::string& args) {
    const int raw = std::system((std::string(exe) + " " + args + quiet).c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status("gradcheck --seed 7"), 0);
  EXPECT_EQ(status("train data.size=20"), 2);
  EXPECT_EQ(status("--no-such-flag"), 2);
}
