#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "classlm/class_bigram.hpp"
#include "classlm/evaluation.hpp"
#include "test_support.hpp"

using namespace classlm;
using classlm::testing::Rng;

namespace {

std::string dump(const ClassModel& m) {
  std::ostringstream s;
  write_class_model(s, m);
  return s.str();
}

// Same partition, cluster ids shuffled on both sides.
ClusterMap relabel(Rng& rng, const ClusterMap& cm) {
  ClusterMap out(cm.vocab_size(), cm.regular_states(), cm.regular_categories());
  for (Side side : {Side::state, Side::category}) {
    std::vector<ClusterId> perm(cm.num_regular(side));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<ClusterId>(i);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.next() % i]);
    for (std::size_t w = 0; w < cm.vocab_size(); ++w)
      if (!ClusterMap::frozen(static_cast<WordId>(w), side))
        out.assign(static_cast<WordId>(w), side, perm[cm.cluster_of(static_cast<WordId>(w), side)]);
  }
  return out;
}

}  // namespace

TEST(ClusterMap, ReservedTokensHaveDedicatedFrozenClusters) {
  ClusterMap cm(6, 3, 4);
  EXPECT_EQ(cm.num_states(), 4);
  EXPECT_EQ(cm.num_categories(), 6);
  EXPECT_EQ(cm.state_of(Vocabulary::kBos), cm.bos_state());
  EXPECT_EQ(cm.state_of(Vocabulary::kEos), cm.bos_state());
  EXPECT_EQ(cm.category_of(Vocabulary::kEos), cm.eos_category());
  EXPECT_EQ(cm.category_of(Vocabulary::kUnk), cm.unk_category());
  EXPECT_TRUE(ClusterMap::frozen(Vocabulary::kBos, Side::state));
  EXPECT_TRUE(ClusterMap::frozen(Vocabulary::kEos, Side::category));
  EXPECT_TRUE(ClusterMap::frozen(Vocabulary::kUnk, Side::category));
  EXPECT_FALSE(ClusterMap::frozen(Vocabulary::kUnk, Side::state));
  EXPECT_THROW(cm.assign(Vocabulary::kEos, Side::state, 0), InvalidMove);
  EXPECT_THROW(cm.assign(Vocabulary::kUnk, Side::category, 0), InvalidMove);
  EXPECT_THROW(cm.assign(4, Side::state, 3), InvalidMove);  // reserved cluster
  EXPECT_THROW(cm.assign(4, Side::category, -1), InvalidMove);
  cm.assign(Vocabulary::kUnk, Side::state, 1);
  EXPECT_EQ(cm.state_of(Vocabulary::kUnk), 1);
}

TEST(InitClustering, MostFrequentWordsBecomeSingletons) {
  std::istringstream text("c c c c b b b a a d\n");
  const Corpus corpus = read_corpus(text);
  const Vocabulary v = build_vocabulary(corpus, {}, 100);
  const CountTable t = count_events(corpus, v);
  const ClusterMap cm = init_clustering(t, v, 3, 3);
  // Category side: c, b get singletons; a, d, and <unk>'s state share the last cluster.
  EXPECT_EQ(cm.category_of(v.lookup("c")), 0);
  EXPECT_EQ(cm.category_of(v.lookup("b")), 1);
  EXPECT_EQ(cm.category_of(v.lookup("a")), 2);
  EXPECT_EQ(cm.category_of(v.lookup("d")), 2);
  EXPECT_EQ(cm.state_of(v.lookup("c")), 0);
  EXPECT_EQ(cm.state_of(v.lookup("b")), 1);
  EXPECT_EQ(cm.state_of(Vocabulary::kUnk), 2);
  EXPECT_THROW(init_clustering(t, v, 6, 2), ConfigError);
  EXPECT_THROW(init_clustering(t, v, 1, 2), ConfigError);
}

TEST(RemapClustering, KeepsKnownWordsAndParksNewOnes) {
  Vocabulary src, dst;
  for (auto w : {"a", "b", "c"}) src.add(w);
  for (auto w : {"c", "z", "a"}) dst.add(w);
  ClusterMap cm(src.size(), 3, 3);
  cm.assign(src.lookup("a"), Side::state, 0);
  cm.assign(src.lookup("a"), Side::category, 1);
  cm.assign(src.lookup("c"), Side::state, 1);
  cm.assign(src.lookup("c"), Side::category, 0);
  const ClusterMap out = remap_clustering(cm, src, dst);
  EXPECT_EQ(out.state_of(dst.lookup("a")), 0);
  EXPECT_EQ(out.category_of(dst.lookup("a")), 1);
  EXPECT_EQ(out.state_of(dst.lookup("c")), 1);
  EXPECT_EQ(out.category_of(dst.lookup("c")), 0);
  EXPECT_EQ(out.state_of(dst.lookup("z")), 2);
  EXPECT_EQ(out.category_of(dst.lookup("z")), 2);
}

TEST(ClassModel, NormalizesOnRandomInstances) {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    const int words = rng.range(4, 97);
    const Vocabulary v = classlm::testing::vocabulary_of(words);
    const CountTable t = count_events(classlm::testing::random_corpus(rng, words, rng.range(1, 150)), v);
    const ClusterMap cm = classlm::testing::random_clustering(rng, v.size(), rng.range(1, 12), rng.range(1, 12));
    const ClassModel m = estimate_class_model(t, cm);
    EXPECT_LT(classlm::testing::max_normalization_error(m, v.size()), 1e-9);
    for (std::size_t ctx = 0; ctx < v.size(); ++ctx)
      for (std::size_t w = 1; w < v.size(); ++w) ASSERT_GT(m.prob(static_cast<WordId>(ctx), static_cast<WordId>(w)), 0.0);
  }
}

TEST(ClassModel, AdaptiveClassModelNormalizes) {
  Rng rng(43);
  for (int trial = 0; trial < 30; ++trial) {
    const auto in = classlm::testing::random_instance(rng, 97, 10);
    const double lambda = rng.range(0, 10) / 10.0;
    const CountTable combined = combine_word_counts(in.adapt, in.back, lambda);
    if (combined.total_tokens() == 0) continue;
    const ClassModel m = estimate_class_model(combined, in.clusters);
    EXPECT_LT(classlm::testing::max_normalization_error(m, in.vocab.size()), 1e-9);
  }
}

TEST(ClassModel, FactorsThroughClusters) {
  Rng rng(47);
  const auto in = classlm::testing::random_instance(rng);
  const ClassModel m = estimate_class_model(in.adapt, in.clusters);
  const auto& cm = in.clusters;
  for (std::size_t ctx = 0; ctx < in.vocab.size(); ++ctx)
    for (std::size_t w = 1; w < in.vocab.size(); ++w) {
      const auto c = static_cast<WordId>(ctx);
      const auto x = static_cast<WordId>(w);
      EXPECT_DOUBLE_EQ(m.prob(c, x), m.category_given_state(cm.state_of(c), cm.category_of(x)).prob *
                                         m.word_given_category(x).prob);
    }
  EXPECT_EQ(m.prob(Vocabulary::kEos, Vocabulary::kBos), 0.0);
}

TEST(ClassModel, ClusterRelabelingDoesNotChangeProbabilities) {
  Rng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = classlm::testing::random_instance(rng);
    const ClassModel a = estimate_class_model(in.adapt, in.clusters);
    const ClassModel b = estimate_class_model(in.adapt, relabel(rng, in.clusters));
    for (std::size_t ctx = 0; ctx < in.vocab.size(); ++ctx)
      for (std::size_t w = 0; w < in.vocab.size(); ++w)
        EXPECT_NEAR(a.prob(static_cast<WordId>(ctx), static_cast<WordId>(w)),
                    b.prob(static_cast<WordId>(ctx), static_cast<WordId>(w)), 1e-15);
  }
}

TEST(ClassModel, UnseenWordsKeepSomeMass) {
  // 'rare' never occurs in training; its category still receives unigram-fallback mass.
  Vocabulary v;
  const WordId a = v.add("a"), b = v.add("b"), rare = v.add("rare");
  const CountTable t(v.size(), v.checksum(), {{Vocabulary::kBos, a, 3}, {a, b, 3}, {b, Vocabulary::kEos, 3}});
  ClusterMap cm(v.size(), 2, 2);
  cm.assign(a, Side::category, 0);
  cm.assign(b, Side::category, 0);
  cm.assign(rare, Side::category, 1);
  const ClassModel m = estimate_class_model(t, cm);
  EXPECT_GT(m.prob(a, rare), 0.0);
  EXPECT_LT(classlm::testing::max_normalization_error(m, v.size()), 1e-12);
}

TEST(ClassFiles, ClusterFileRoundTrip) {
  Rng rng(59);
  const auto in = classlm::testing::random_instance(rng);
  std::stringstream s;
  write_clusters(s, in.clusters, in.vocab, {7, -123.5, 0.3});
  const ClusterFile f = read_clusters(s);
  EXPECT_EQ(f.clusters, in.clusters);
  EXPECT_EQ(f.vocab, in.vocab);
  EXPECT_EQ(f.meta.iteration, 7);
  EXPECT_DOUBLE_EQ(f.meta.score, -123.5);
  EXPECT_DOUBLE_EQ(f.meta.lambda, 0.3);
}

TEST(ClassFiles, ClusterFileRejectsMisplacedReservedToken) {
  Vocabulary v;
  v.add("a");
  v.add("b");
  std::ostringstream s;
  write_clusters(s, ClusterMap(v.size(), 2, 2), v);
  std::string text = s.str();
  const auto pos = text.find("<unk> 1 3");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 9, "<unk> 1 0");
  std::istringstream in(text);
  EXPECT_THROW(read_clusters(in), FormatError);
}

TEST(ClassFiles, ClassModelRoundTripIsByteIdentical) {
  Rng rng(61);
  for (int trial = 0; trial < 5; ++trial) {
    const auto in = classlm::testing::random_instance(rng);
    const ClassModel m = estimate_class_model(in.back, in.clusters);
    const std::string first = dump(m);
    std::istringstream s(first);
    const ClassModel back = read_class_model(s);
    EXPECT_EQ(dump(back), first);
    EXPECT_EQ(back.clusters(), m.clusters());
    for (std::size_t ctx = 0; ctx < in.vocab.size(); ++ctx)
      for (std::size_t w = 0; w < in.vocab.size(); ++w)
        EXPECT_NEAR(back.prob(static_cast<WordId>(ctx), static_cast<WordId>(w)),
                    m.prob(static_cast<WordId>(ctx), static_cast<WordId>(w)), 1e-12);
  }
}
