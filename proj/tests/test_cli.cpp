#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "classlm/cli.hpp"
#include "test_support.hpp"

using namespace classlm;
using classlm::testing::read_text;
using classlm::testing::Rng;
using classlm::testing::TempDir;
using classlm::testing::write_text;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Background, adaptation and held-out text over an overlapping word set.
struct Workspace {
  TempDir dir{"cli"};
  std::string back = dir.file("back.txt"), adapt = dir.file("adapt.txt"), heldout = dir.file("heldout.txt");
  std::string vocab = dir.file("vocab.txt"), back_counts = dir.file("back.counts"),
              adapt_counts = dir.file("adapt.counts");

  Workspace() {
    Rng rng(4001);
    write_text(back, classlm::testing::corpus_text(classlm::testing::random_corpus(rng, 40, 300)));
    write_text(adapt, classlm::testing::corpus_text(classlm::testing::random_corpus(rng, 30, 80)));
    write_text(heldout, classlm::testing::corpus_text(classlm::testing::random_corpus(rng, 45, 30)));
  }

  void prepare() {
    ASSERT_EQ(cli({"vocab", "--background", back, "--adaptation", adapt, "--vocab-size", "60", "--out", vocab}).code, 0);
    ASSERT_EQ(cli({"counts", "--vocab", vocab, "--corpus", back, "--out", back_counts}).code, 0);
    ASSERT_EQ(cli({"counts", "--vocab", vocab, "--corpus", adapt, "--out", adapt_counts}).code, 0);
  }
};

}  // namespace

TEST(Cli, VocabularyAndCountsFiles) {
  Workspace ws;
  ws.prepare();
  std::ifstream vin(ws.vocab);
  const Vocabulary v = read_vocabulary(vin);
  EXPECT_LE(v.size(), 60u);
  std::ifstream cin(ws.adapt_counts);
  const CountTable t = read_counts(cin);
  EXPECT_EQ(t.vocab_checksum(), v.checksum());
  // stdout when --out is omitted
  const auto r = cli({"counts", "--vocab", ws.vocab, "--corpus", ws.adapt});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, read_text(ws.adapt_counts));
}

TEST(Cli, TrainAndEvaluateBackoffAndClassModels) {
  Workspace ws;
  ws.prepare();
  const std::string bo = ws.dir.file("adapt_bo.model"), cl = ws.dir.file("adapt_cl.model");
  ASSERT_EQ(cli({"train", "--method", "adapt_bo", "--vocab", ws.vocab, "--counts", ws.adapt_counts, "--out", bo}).code, 0);
  const auto t = cli({"train", "--method", "adapt_cl", "--vocab", ws.vocab, "--counts", ws.adapt_counts, "--clusters", "4",
                      "--out", cl, "--trace", ws.dir.file("trace.txt")});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.err.find("iteration 1:"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(cl + ".clusters"));
  EXPECT_TRUE(std::filesystem::exists(ws.dir.file("trace.txt")));

  const std::string rec = ws.dir.file("rec.json");
  const auto e = cli({"eval", "--model", bo, "--vocab", ws.vocab, "--heldout", ws.heldout, "--method", "adapt_bo",
                      "--adaptation-words", "321", "--out", rec});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.out.rfind("adapt_bo PP ", 0), 0u);
  const auto records = parse_records(read_text(rec));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].adaptation_words, 321u);
  EXPECT_GT(records[0].perplexity, 1.0);

  const auto ec = cli({"eval", "--model", cl, "--vocab", ws.vocab, "--heldout", ws.heldout});
  ASSERT_EQ(ec.code, 0) << ec.err;
  EXPECT_EQ(ec.out.rfind("adapt_cl PP ", 0), 0u);
}

TEST(Cli, AdaptationMethods) {
  Workspace ws;
  ws.prepare();
  const std::string back_bo = ws.dir.file("back_bo.model"), back_cl = ws.dir.file("back_cl.model");
  const std::string fill = ws.dir.file("fillup.model"), ca = ws.dir.file("clust_adapt.model");
  ASSERT_EQ(cli({"train", "--method", "back_bo", "--vocab", ws.vocab, "--counts", ws.back_counts, "--out", back_bo}).code, 0);
  ASSERT_EQ(cli({"train", "--method", "back_cl", "--vocab", ws.vocab, "--counts", ws.back_counts, "--clusters", "4",
                 "--out", back_cl})
                .code,
            0);
  const auto f = cli({"adapt", "--method", "fillup", "--vocab", ws.vocab, "--counts", ws.adapt_counts, "--model", back_bo,
                      "--out", fill});
  ASSERT_EQ(f.code, 0) << f.err;
  const auto c = cli({"adapt", "--method", "clust_adapt", "--vocab", ws.vocab, "--counts", ws.adapt_counts,
                      "--background-counts", ws.back_counts, "--init", back_cl + ".clusters", "--out", ca});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(c.err.find("lambda"), std::string::npos);
  for (const auto& m : {fill, ca})
    EXPECT_EQ(cli({"eval", "--model", m, "--vocab", ws.vocab, "--heldout", ws.heldout}).code, 0);
  // Adaptation methods are refused by train and vice versa.
  EXPECT_EQ(cli({"train", "--method", "fillup", "--vocab", ws.vocab, "--counts", ws.adapt_counts, "--out", fill}).code, 1);
  EXPECT_EQ(cli({"adapt", "--method", "adapt_bo", "--vocab", ws.vocab, "--counts", ws.adapt_counts, "--out", fill}).code, 1);
}

TEST(Cli, ChecksumMismatchFailsWithoutWritingOutput) {
  Workspace ws;
  ws.prepare();
  const std::string other_vocab = ws.dir.file("other.vocab");
  ASSERT_EQ(cli({"vocab", "--background", ws.back, "--vocab-size", "20", "--out", other_vocab}).code, 0);
  const std::string out = ws.dir.file("never.model");
  const auto r = cli({"train", "--method", "adapt_bo", "--vocab", other_vocab, "--counts", ws.adapt_counts, "--out", out});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("different vocabulary"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Cli, ReportFromRecordsWithMethodFilter) {
  Workspace ws;
  const std::string r1 = ws.dir.file("r1.json"), r2 = ws.dir.file("r2.json");
  write_text(r1, records_json({{"adapt_bo", 57.0, 100, 1, 0.01, 1000, "adaptation"}}));
  write_text(r2, records_json({{"fillup", 50.9, 100, 1, 0.01, 1000, "adaptation"}}));
  const auto both = cli({"report", "--records", r1, r2});
  ASSERT_EQ(both.code, 0) << both.err;
  EXPECT_NE(both.out.find("10.70"), std::string::npos);
  const auto one = cli({"report", "--records", r1, r2, "--method", "fillup"});
  ASSERT_EQ(one.code, 0);
  EXPECT_NE(one.out.find("Results for fillup"), std::string::npos);
  EXPECT_EQ(one.out.find("Results for adapt_bo"), std::string::npos);
}

TEST(Cli, ReportRunsTheSuiteAndWritesJson) {
  Workspace ws;
  const std::string out = ws.dir.file("report.txt");
  const auto r = cli({"report", "--background", ws.back, "--adaptation", ws.adapt, "--heldout", ws.heldout, "--sizes",
                      "100", "400", "--clusters", "4", "--vocab-size", "60", "--method", "adapt_bo", "--method",
                      "clust_adapt", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = read_text(out);
  EXPECT_NE(text.find("Results for clust_adapt"), std::string::npos);
  EXPECT_EQ(parse_records(read_text(out + ".json")).size(), 4u);
}

TEST(Cli, ConfigFileSuppliesOptions) {
  Workspace ws;
  ws.prepare();
  const std::string conf = ws.dir.file("train.ini");
  write_text(conf, "[vocab]\nvocab-size=10\n[train]\nmethod=adapt_cl\nclusters=3\nmax-iterations=1\n");
  const std::string out = ws.dir.file("cl.model");
  const auto r = cli({"train", "--config", conf, "--vocab", ws.vocab, "--counts", ws.adapt_counts, "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(out + ".clusters");
  const ClusterFile f = read_clusters(in);
  EXPECT_EQ(f.clusters.regular_states(), 3);
  EXPECT_EQ(f.meta.iteration, 1);
  // Keys outside a subcommand section, or unknown keys, are errors rather than silently ignored.
  write_text(conf, "clusters=3\n");
  EXPECT_EQ(cli({"train", "--config", conf, "--vocab", ws.vocab, "--counts", ws.adapt_counts, "--out", out}).code, 2);
}

TEST(Cli, UsageErrors) {
  Workspace ws;
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"train", "--vocab", "x"}).code, 2);
  EXPECT_EQ(cli({"vocab", "--background", ws.back, "--bogus"}).code, 2);
  EXPECT_EQ(cli({"vocab", "--background", ws.dir.file("missing.txt")}).code, 1);
  EXPECT_EQ(cli({"vocab", "--background", ws.back, "--vocab-size", "2"}).code, 1);
  EXPECT_EQ(cli({"report", "--background", ws.back, "--adaptation", ws.adapt, "--heldout", ws.adapt}).code, 1);
  const auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("report"), std::string::npos);
}
