#include <gtest/gtest.h>

#include <cmath>

#include "classlm/criterion.hpp"
#include "test_support.hpp"

using namespace classlm;
using classlm::testing::close_rel;
using classlm::testing::Rng;

namespace {

ClassCountTable table(const std::vector<std::vector<Count>>& cells) {
  ClassCountTable t(static_cast<ClusterId>(cells.size()), static_cast<ClusterId>(cells[0].size()));
  for (ClusterId s = 0; s < t.num_states(); ++s)
    for (ClusterId g = 0; g < t.num_categories(); ++g) {
      t.cell(s, g) = cells[s][g];
      t.state_total(s) += cells[s][g];
      t.category_total(g) += cells[s][g];
    }
  return t;
}

CriterionDiscounts random_discounts(Rng& rng) {
  return {Discount(0.05 + 0.9 * rng.unit()), Discount(0.05 + 0.9 * rng.unit()), Discount(0.05 + 0.9 * rng.unit())};
}

}  // namespace

TEST(Criterion, WorkedExample) {
  const double f = criterion_F(table({{3, 0}, {0, 2}}), Discount(0.5));
  EXPECT_NEAR(f, 3 * std::log(1.5) + 2 * std::log(0.5) - 6 * std::log(2.0), 1e-12);
}

TEST(Criterion, SingletonCellsUseTheLeaveOneOutTerm) {
  // cells 1,1,2,0: n1 = 2, n+ = 3, n0 = 1.
  const double b = 0.4;
  const double f = criterion_F(table({{1, 1}, {2, 0}}), Discount(b));
  const double expected = 2 * std::log(2 - 1 - b) + 2 * std::log(b * 2 / 2.0) - (2 * std::log(1.0) + 2 * std::log(1.0)) -
                          (3 * std::log(2.0) + 0.0);
  EXPECT_NEAR(f, expected, 1e-12);
}

TEST(Criterion, DegenerateWhenAtMostOneCellIsNonzero) {
  EXPECT_EQ(criterion_F(table({{5, 0}, {0, 0}}), Discount(0.5)), kDegenerate);
  EXPECT_EQ(criterion_F(table({{0, 0}, {0, 0}}), Discount(0.5)), kDegenerate);
}

TEST(Criterion, InterpolateRoundsHalvesUp) {
  EXPECT_EQ(interpolate_round(3, 4, 0.5), 4);
  EXPECT_EQ(interpolate_round(0, 5, 0.5), 3);
  EXPECT_EQ(interpolate_round(7, 2, 1.0), 7);
  EXPECT_EQ(interpolate_round(7, 2, 0.0), 2);
}

TEST(Criterion, CombinedMarginalsAreRoundedIndependently) {
  // Cells 1 and 1 at lambda 0.5 against 0 and 0 round to 1 each (0.5 -> 1), but the
  // marginal 2 against 0 rounds to 1, not to the sum of the rounded cells.
  const auto a = table({{1, 1}});
  const auto b = table({{0, 0}});
  const auto cc = combine_counts(a, b, 0.5);
  EXPECT_EQ(cc.combined.cell(0, 0), 1);
  EXPECT_EQ(cc.combined.cell(0, 1), 1);
  EXPECT_EQ(cc.combined.state_total(0), 1);
  EXPECT_THROW(combine_counts(a, b, 1.5), ConfigError);
}

TEST(Criterion, MatchesReferenceOnRandomInstances) {
  Rng rng(1001);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = classlm::testing::random_instance(rng);
    const auto d = random_discounts(rng);
    const double lambda = rng.unit();
    const double f = criterion_F(aggregate_class_counts(in.adapt, in.clusters), d);
    const double ref = classlm::testing::reference_F(in.adapt, in.clusters, d.bigram.value());
    EXPECT_TRUE(close_rel(f, ref, 1e-10)) << f << " vs " << ref;
    const double fa = criterion_F_adapt(
        combine_counts(aggregate_class_counts(in.adapt, in.clusters), aggregate_class_counts(in.back, in.clusters), lambda),
        d);
    const double refa = classlm::testing::reference_F_adapt(in.adapt, in.back, in.clusters, lambda, d.bigram.value(),
                                                            d.state.value(), d.category.value());
    EXPECT_TRUE(close_rel(fa, refa, 1e-10)) << fa << " vs " << refa;
  }
}

TEST(Criterion, LambdaEndpointsSelectOneSource) {
  Rng rng(1003);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = classlm::testing::random_instance(rng);
    const auto a = aggregate_class_counts(in.adapt, in.clusters);
    const auto b = aggregate_class_counts(in.back, in.clusters);
    EXPECT_EQ(combine_counts(a, b, 1.0).combined, a);
    EXPECT_EQ(combine_counts(a, b, 0.0).combined, b);
    const auto d = random_discounts(rng);
    EXPECT_EQ(criterion_F_adapt_terms(combine_counts(a, b, 1.0), d).bigram_sum, criterion_F_terms(a, d).bigram_sum);
  }
}

TEST(Criterion, EmptyAdaptationLeavesOnlySingletonTerms) {
  const auto a = table({{0, 0}, {0, 0}});
  const auto b = table({{1, 4}, {1, 0}});
  const auto t = criterion_F_adapt_terms(combine_counts(a, b, 0.0), Discount(0.5));
  EXPECT_EQ(t.bigram_sum, 0.0);
  EXPECT_EQ(t.state_sum, 0.0);
  EXPECT_EQ(t.category_sum, 0.0);
  EXPECT_NEAR(t.bigram_singletons, 2 * std::log(0.5 * 2 / 2.0), 1e-12);
  EXPECT_NEAR(t.state_singletons, std::log(0.5 * 1 / 1.0), 1e-12);  // state totals 5, 1
  EXPECT_NEAR(t.category_singletons, 0.0, 1e-12);                   // category totals 2, 4
}

TEST(Criterion, DiscountsAreEstimatedPerFamily) {
  Vocabulary v;
  const WordId a = v.add("a"), b = v.add("b");
  // Bigram counts 2, 1, 1; context totals 2 (<s>) and 2 (a); unigrams 2 (a), 1 (b), 1 (</s>).
  const CountTable t(v.size(), v.checksum(), {{Vocabulary::kBos, a, 2}, {a, b, 1}, {a, Vocabulary::kEos, 1}});
  const auto d = estimate_criterion_discounts(t);
  EXPECT_DOUBLE_EQ(d.bigram.value(), 2.0 / (2.0 + 2.0));
  EXPECT_DOUBLE_EQ(d.state.value(), Discount::kMin);  // no singleton contexts
  EXPECT_DOUBLE_EQ(d.category.value(), 2.0 / (2.0 + 2.0));
  EXPECT_EQ(CriterionDiscounts(Discount(0.3)), CriterionDiscounts(Discount(0.3), Discount(0.3), Discount(0.3)));
}

TEST(CriterionState, RunningScoreMatchesRecompute) {
  Rng rng(1007);
  for (int trial = 0; trial < 20; ++trial) {
    auto in = classlm::testing::random_instance(rng);
    const auto d = random_discounts(rng);
    CriterionState st(in.adapt, in.clusters, d);
    EXPECT_TRUE(close_rel(st.score(), classlm::testing::reference_F(in.adapt, in.clusters, d.bigram.value()), 1e-10));
    CriterionState sa(in.adapt, in.back, in.clusters, d, 0.7);
    EXPECT_TRUE(close_rel(sa.score(),
                          classlm::testing::reference_F_adapt(in.adapt, in.back, in.clusters, 0.7, d.bigram.value(),
                                                              d.state.value(), d.category.value()),
                          1e-10));
    sa.set_lambda(0.2);
    EXPECT_EQ(sa.score(), sa.recompute());
    EXPECT_THROW(st.set_lambda(0.5), ConfigError);
  }
}

TEST(CriterionState, DeltasMatchRecomputationAndReverseMovesCancel) {
  Rng rng(1009);
  for (int trial = 0; trial < 20; ++trial) {
    auto in = classlm::testing::random_instance(rng);
    const auto d = random_discounts(rng);
    const bool adaptive = trial % 2 == 1;
    std::optional<CriterionState> st;
    if (adaptive)
      st.emplace(in.adapt, in.back, in.clusters, d, rng.range(0, 10) / 10.0);
    else
      st.emplace(in.adapt, in.clusters, d);
    for (int m = 0; m < 50; ++m) {
      const Side side = rng.range(0, 1) ? Side::state : Side::category;
      const auto w = static_cast<WordId>(rng.range(0, static_cast<int>(in.vocab.size()) - 1));
      if (ClusterMap::frozen(w, side)) continue;
      const ClusterId from = st->clusters().cluster_of(w, side);
      ClusterId to = static_cast<ClusterId>(rng.range(0, st->clusters().num_regular(side) - 1));
      if (to == from) to = (to + 1) % st->clusters().num_regular(side);
      const double before = st->recompute();
      const double predicted = delta_for_move(*st, w, side, from, to);
      EXPECT_EQ(st->recompute(), before);  // evaluation leaves the tables alone
      st->apply(w, side, to);
      const double after = st->recompute();
      if (std::isfinite(before) && std::isfinite(after)) {
        EXPECT_NEAR(predicted, after - before, 1e-8 * std::max(1.0, std::abs(after)));
        const double back = delta_for_move(*st, w, side, to, from);
        EXPECT_NEAR(predicted + back, 0.0, 1e-9);
        EXPECT_NEAR(st->score(), after, 1e-8 * std::max(1.0, std::abs(after)));
      }
    }
  }
}

TEST(CriterionState, RejectsIllegalMoves) {
  Rng rng(1013);
  auto in = classlm::testing::random_instance(rng);
  CriterionState st(in.adapt, in.clusters, Discount(0.5));
  EXPECT_THROW(st.delta(Vocabulary::kBos, Side::state, 0), InvalidMove);
  EXPECT_THROW(st.delta(Vocabulary::kUnk, Side::category, 0), InvalidMove);
  EXPECT_THROW(st.delta(3, Side::state, st.clusters().num_regular(Side::state)), InvalidMove);
  const ClusterId from = st.clusters().state_of(3);
  EXPECT_THROW(delta_for_move(st, 3, Side::state, from + 1, from), InvalidMove);
  const auto deltas = st.candidate_deltas(3, Side::state);
  EXPECT_EQ(deltas.size(), static_cast<std::size_t>(st.clusters().num_regular(Side::state)));
  EXPECT_EQ(deltas[from], 0.0);
}

TEST(CriterionState, RelabelingClustersLeavesTheCriterionUnchanged) {
  Rng rng(1019);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = classlm::testing::random_instance(rng);
    ClusterMap swapped(in.vocab.size(), in.clusters.regular_states(), in.clusters.regular_categories());
    const ClusterId ks = in.clusters.regular_states(), kg = in.clusters.regular_categories();
    for (std::size_t w = 0; w < in.vocab.size(); ++w) {
      const auto x = static_cast<WordId>(w);
      if (!ClusterMap::frozen(x, Side::state)) swapped.assign(x, Side::state, ks - 1 - in.clusters.state_of(x));
      if (!ClusterMap::frozen(x, Side::category)) swapped.assign(x, Side::category, kg - 1 - in.clusters.category_of(x));
    }
    const auto d = random_discounts(rng);
    EXPECT_TRUE(close_rel(CriterionState(in.adapt, in.clusters, d).score(), CriterionState(in.adapt, swapped, d).score(),
                          1e-12));
    EXPECT_TRUE(close_rel(CriterionState(in.adapt, in.back, in.clusters, d, 0.4).score(),
                          CriterionState(in.adapt, in.back, swapped, d, 0.4).score(), 1e-12));
  }
}
