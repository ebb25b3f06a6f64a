#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "sekge/csv.hpp"
#include "test_util.hpp"

using sekge::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const TempDir& dir, const std::string& args) {
  const auto out = dir.path() / "stdout.txt";
  const auto err = dir.path() / "stderr.txt";
  const std::string cmd = std::string(SEKGE_CLI) + " " + args + " >" + out.string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_dataset(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream train(dir / "train.txt"), valid(dir / "valid.txt"), test(dir / "test.txt");
  const auto store = sekge::testing::toy_store();
  const auto dump = [&](std::ofstream& out, sekge::Split s) {
    for (const auto& t : store.split(s)) {
      out << "n" << t.head << "\tr" << t.relation << "\tn" << t.tail << '\n';
    }
  };
  dump(train, sekge::Split::train);
  dump(valid, sekge::Split::valid);
  dump(test, sekge::Split::test);
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir("cli-usage");
  EXPECT_EQ(run(dir, "").code, 1);
  EXPECT_EQ(run(dir, "frobnicate").code, 1);
  EXPECT_EQ(run(dir, "eval").code, 1);
  EXPECT_EQ(run(dir, "se-metrics --data-dir x --split nope").code, 1);
}

TEST(Cli, HelpExitsZero) {
  TempDir dir("cli-help");
  const auto r = run(dir, "train --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("edge_removal_rate"), std::string::npos);
}

TEST(Cli, MissingRequiredKeyIsNamed) {
  TempDir dir("cli-cfg");
  write_dataset(dir.path() / "data");
  std::ofstream(dir.path() / "run.cfg") << "layers=1\n";
  const auto r = run(dir, "train --config " + (dir.path() / "run.cfg").string() + " --data-dir " +
                              (dir.path() / "data").string() + " --out " +
                              (dir.path() / "ckpt").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("'n'"), std::string::npos) << r.err;
}

TEST(Cli, MissingDataIsADataError) {
  TempDir dir("cli-data");
  const auto r = run(dir, "ingest --data-dir " + (dir.path() / "absent").string() + " --stats");
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, FullPipeline) {
  TempDir dir("cli-pipe");
  const auto data = dir.path() / "data";
  const auto ckpt = dir.path() / "ckpt";
  write_dataset(data);

  auto r = run(dir, "ingest --data-dir " + data.string() + " --stats");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("split,triples,entities_seen,relations_seen"), std::string::npos);
  EXPECT_NE(r.out.find("train,20,"), std::string::npos) << r.out;

  std::ofstream(dir.path() / "run.cfg")
      << "n=16\nreshape_rows=4\nchannels=4\nlayers=1\nepochs=3\nbatch_size=8\nseed=3\n";
  r = run(dir, "train --quiet --config " + (dir.path() / "run.cfg").string() + " --data-dir " +
                   data.string() + " --out " + ckpt.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(ckpt / "manifest.txt"));
  EXPECT_TRUE(std::filesystem::exists(ckpt / "train_log.csv"));

  r = run(dir, "eval --checkpoint " + ckpt.string() + " --split test --ranks " +
                   (dir.path() / "ranks.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mrr,"), std::string::npos) << r.out;

  r = run(dir, "se-metrics --data-dir " + data.string() + " --split test --out " +
                   (dir.path() / "se.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto se = sekge::read_csv(dir.path() / "se.csv");
  EXPECT_EQ(se.rows.size(), 8u);

  r = run(dir, "bucket-report --ranks " + (dir.path() / "ranks.csv").string() + " --se " +
                   (dir.path() / "se.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("se_name,bucket,lo,hi,count,mean_rank", 0), 0u) << r.out;

  // Evidence file for another split no longer aligns with the ranks.
  run(dir, "se-metrics --data-dir " + data.string() + " --split train --out " +
               (dir.path() / "se_train.csv").string());
  r = run(dir, "bucket-report --ranks " + (dir.path() / "ranks.csv").string() + " --se " +
                   (dir.path() / "se_train.csv").string());
  EXPECT_EQ(r.code, 2);
}
