#pragma once

// Leaving-one-out clustering criteria and their incremental evaluation.
//
// Standard criterion, on class counts N(s,g) with marginals N(s), N(g):
//
//   F = sum_{N(s,g)>1} N(s,g) log(N(s,g) - 1 - B) + n1 log(B (n+ - 1) / (n0 + 1))
//       - sum_{N(s)>1} N(s) log(N(s) - 1) - sum_{N(g)>1} N(g) log(N(g) - 1)
//
// Adaptive criterion: events are counted on the adaptation data (N_A) but estimated from
// combined counts N_C = Round(lambda N_A + (1 - lambda) N_B). Cells and both marginals are
// interpolated and rounded independently, and the unigram estimates get their own
// singleton terms:
//
//   F_adapt = sum_{N_A(s,g)>=1, N_C(s,g)>1} N_A(s,g) log(N_C(s,g) - 1 - B) + T(n_bi)
//           - sum_{N_A(s)>=1, N_C(s)>1} N_A(s) log(N_C(s) - 1 - B)
//           - sum_{N_A(g)>=1, N_C(g)>1} N_A(g) log(N_C(g) - 1 - B)
//           - T(n_s) - T(n_g),        T(n) = n1 log(B (n+ - 1) / (n0 + 1))
//
// Natural log. A singleton term whose n+ <= 1 has no finite value; the whole criterion is
// then reported as -inf ("degenerate").

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "classlm/class_bigram.hpp"
#include "classlm/common.hpp"
#include "classlm/discounting.hpp"
#include "classlm/text_corpus.hpp"

namespace classlm {

enum class CriterionKind { standard, adaptive };

inline constexpr double kDegenerate = -std::numeric_limits<double>::infinity();

/// Number of values equal to zero, equal to one, and greater than zero.
struct NCounts {
  Count n0 = 0;
  Count n1 = 0;
  Count nplus = 0;

  template <typename Range>
  static NCounts of(const Range& values) {
    NCounts n;
    for (Count c : values) {
      if (c == 0) ++n.n0;
      if (c == 1) ++n.n1;
      if (c > 0) ++n.nplus;
    }
    return n;
  }
  bool operator==(const NCounts&) const = default;
};

/// Dense class-level counts: cells N(s,g) row-major, and state / category marginals.
class ClassCountTable {
 public:
  ClassCountTable() = default;
  ClassCountTable(ClusterId num_states, ClusterId num_categories)
      : num_states_(num_states), num_categories_(num_categories),
        cells_(static_cast<std::size_t>(num_states) * num_categories, 0), state_totals_(num_states, 0),
        category_totals_(num_categories, 0) {}

  ClusterId num_states() const { return num_states_; }
  ClusterId num_categories() const { return num_categories_; }

  Count cell(ClusterId s, ClusterId g) const { return cells_[index(s, g)]; }
  Count& cell(ClusterId s, ClusterId g) { return cells_[index(s, g)]; }
  Count state_total(ClusterId s) const { return state_totals_[s]; }
  Count& state_total(ClusterId s) { return state_totals_[s]; }
  Count category_total(ClusterId g) const { return category_totals_[g]; }
  Count& category_total(ClusterId g) { return category_totals_[g]; }

  std::span<const Count> cells() const { return cells_; }
  std::span<const Count> state_totals() const { return state_totals_; }
  std::span<const Count> category_totals() const { return category_totals_; }

  /// n-counts over the cells; n0 + n+ is always num_states * num_categories.
  NCounts cell_ncounts() const { return NCounts::of(cells_); }

  bool operator==(const ClassCountTable&) const = default;

 private:
  std::size_t index(ClusterId s, ClusterId g) const { return static_cast<std::size_t>(s) * num_categories_ + g; }

  ClusterId num_states_ = 0;
  ClusterId num_categories_ = 0;
  std::vector<Count> cells_;
  std::vector<Count> state_totals_;
  std::vector<Count> category_totals_;
};

/// Adaptation class counts A alongside the combined counts C at one lambda.
/// C's marginals are interpolated from A's and B's marginals, not summed from C's cells.
struct CombinedClassCounts {
  ClassCountTable adapt;
  ClassCountTable combined;
  double lambda = 1.0;
  NCounts bigram;
  NCounts state;
  NCounts category;
};

/// Round(lambda a + (1 - lambda) b), halves away from zero.
inline Count interpolate_round(Count a, Count b, double lambda) {
  return static_cast<Count>(std::round(lambda * static_cast<double>(a) + (1.0 - lambda) * static_cast<double>(b)));
}

inline ClassCountTable aggregate_class_counts(const CountTable& counts, const ClusterMap& cm) {
  if (counts.vocab_size() != cm.vocab_size()) throw ConfigError("counts and clustering differ in vocabulary size");
  ClassCountTable t(cm.num_states(), cm.num_categories());
  for (const auto& e : counts.bigrams()) {
    const ClusterId s = cm.state_of(e.context);
    const ClusterId g = cm.category_of(e.word);
    t.cell(s, g) += e.count;
    t.state_total(s) += e.count;
    t.category_total(g) += e.count;
  }
  return t;
}

inline CombinedClassCounts combine_counts(const ClassCountTable& a, const ClassCountTable& b, double lambda) {
  if (a.num_states() != b.num_states() || a.num_categories() != b.num_categories())
    throw ConfigError("class count tables differ in shape");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  CombinedClassCounts cc;
  cc.adapt = a;
  cc.lambda = lambda;
  cc.combined = ClassCountTable(a.num_states(), a.num_categories());
  for (ClusterId s = 0; s < a.num_states(); ++s) {
    for (ClusterId g = 0; g < a.num_categories(); ++g)
      cc.combined.cell(s, g) = interpolate_round(a.cell(s, g), b.cell(s, g), lambda);
    cc.combined.state_total(s) = interpolate_round(a.state_total(s), b.state_total(s), lambda);
  }
  for (ClusterId g = 0; g < a.num_categories(); ++g)
    cc.combined.category_total(g) = interpolate_round(a.category_total(g), b.category_total(g), lambda);
  cc.bigram = cc.combined.cell_ncounts();
  cc.state = NCounts::of(cc.combined.state_totals());
  cc.category = NCounts::of(cc.combined.category_totals());
  return cc;
}

/// Discounts for the three distribution families the criteria smooth: class bigrams, state
/// unigrams and category unigrams. F only uses the bigram one. A single Discount converts to
/// the same value everywhere.
struct CriterionDiscounts {
  Discount bigram;
  Discount state;
  Discount category;

  CriterionDiscounts() = default;
  CriterionDiscounts(Discount b) : bigram(b), state(b), category(b) {}  // NOLINT(google-explicit-constructor)
  CriterionDiscounts(Discount bi, Discount st, Discount ca) : bigram(bi), state(st), category(ca) {}
  bool operator==(const CriterionDiscounts&) const = default;
};

/// Bigram B from the word-bigram count-of-counts, state and category B from the count-of-counts
/// of word context totals and word unigrams respectively.
inline CriterionDiscounts estimate_criterion_discounts(const CountTable& counts) {
  std::vector<Count> bigrams;
  bigrams.reserve(counts.bigrams().size());
  for (const auto& e : counts.bigrams()) bigrams.push_back(e.count);
  std::vector<Count> contexts(counts.vocab_size());
  for (std::size_t v = 0; v < contexts.size(); ++v) contexts[v] = counts.context_total(static_cast<WordId>(v));
  return {estimate_discount(CountOfCounts::of(bigrams)), estimate_discount(CountOfCounts::of(contexts)),
          estimate_discount(CountOfCounts::of(counts.unigrams()))};
}

/// The criterion split into its summands. Sums are reported as positive magnitudes;
/// total() applies the signs.
struct CriterionTerms {
  double bigram_sum = 0.0;
  double bigram_singletons = 0.0;
  double state_sum = 0.0;
  double category_sum = 0.0;
  double state_singletons = 0.0;
  double category_singletons = 0.0;
  bool degenerate = false;

  double total() const {
    if (degenerate) return kDegenerate;
    return bigram_sum + bigram_singletons - state_sum - category_sum - state_singletons - category_singletons;
  }
};

namespace detail {

// n1 log(B (n+ - 1) / (n0 + 1)); nullopt when n+ <= 1.
inline std::optional<double> singleton_term(const NCounts& n, double b) {
  if (n.nplus <= 1) return std::nullopt;
  if (n.n1 == 0) return 0.0;
  return static_cast<double>(n.n1) *
         std::log(b * static_cast<double>(n.nplus - 1) / static_cast<double>(n.n0 + 1));
}

}  // namespace detail

inline CriterionTerms criterion_F_terms(const ClassCountTable& t, const CriterionDiscounts& discount) {
  const double b = discount.bigram.value();
  CriterionTerms r;
  for (Count c : t.cells())
    if (c > 1) r.bigram_sum += static_cast<double>(c) * std::log(static_cast<double>(c) - 1.0 - b);
  for (Count c : t.state_totals())
    if (c > 1) r.state_sum += static_cast<double>(c) * std::log(static_cast<double>(c) - 1.0);
  for (Count c : t.category_totals())
    if (c > 1) r.category_sum += static_cast<double>(c) * std::log(static_cast<double>(c) - 1.0);
  auto singles = detail::singleton_term(t.cell_ncounts(), b);
  r.degenerate = !singles;
  r.bigram_singletons = singles.value_or(0.0);
  return r;
}

/// Standard criterion; kDegenerate when n+ <= 1.
inline double criterion_F(const ClassCountTable& t, const CriterionDiscounts& discount) {
  return criterion_F_terms(t, discount).total();
}

inline CriterionTerms criterion_F_adapt_terms(const CombinedClassCounts& cc, const CriterionDiscounts& discount) {
  auto sum = [](std::span<const Count> a, std::span<const Count> c, Discount d) {
    const double b = d.value();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] >= 1 && c[i] > 1) s += static_cast<double>(a[i]) * std::log(static_cast<double>(c[i]) - 1.0 - b);
    return s;
  };
  CriterionTerms r;
  r.bigram_sum = sum(cc.adapt.cells(), cc.combined.cells(), discount.bigram);
  r.state_sum = sum(cc.adapt.state_totals(), cc.combined.state_totals(), discount.state);
  r.category_sum = sum(cc.adapt.category_totals(), cc.combined.category_totals(), discount.category);
  auto bi = detail::singleton_term(cc.bigram, discount.bigram.value());
  auto st = detail::singleton_term(cc.state, discount.state.value());
  auto ca = detail::singleton_term(cc.category, discount.category.value());
  r.degenerate = !bi || !st || !ca;
  r.bigram_singletons = bi.value_or(0.0);
  r.state_singletons = st.value_or(0.0);
  r.category_singletons = ca.value_or(0.0);
  return r;
}

/// Adaptive criterion; kDegenerate when any of the three n+ is <= 1.
inline double criterion_F_adapt(const CombinedClassCounts& cc, const CriterionDiscounts& discount) {
  return criterion_F_adapt_terms(cc, discount).total();
}

/// Incrementally maintained criterion over a clustering that is being edited one word at a time.
///
/// Keeps the word-level transition lists of the adaptation (and, for the adaptive criterion,
/// background) counts, the class-level tables A, B and combined C, and the n-counts over C.
/// A move of word w on the category side touches only the cells (s, from) and (s, to) for
/// states s that precede w, plus two category marginals; a state-side move mirrors that.
/// In standard mode C is A itself.
class CriterionState {
 public:
  /// Standard criterion F over `counts`.
  CriterionState(const CountTable& counts, ClusterMap clusters, const CriterionDiscounts& discount)
      : kind_(CriterionKind::standard), discount_(discount), clusters_(std::move(clusters)) {
    init(counts, nullptr);
  }

  /// Adaptive criterion F_adapt over adaptation counts and background counts.
  CriterionState(const CountTable& adapt, const CountTable& back, ClusterMap clusters, const CriterionDiscounts& discount,
                 double lambda)
      : kind_(CriterionKind::adaptive), discount_(discount), lambda_(lambda), clusters_(std::move(clusters)) {
    if (adapt.vocab_size() != back.vocab_size() || adapt.vocab_checksum() != back.vocab_checksum())
      throw ConfigError("adaptation and background counts are over different vocabularies");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
    init(adapt, &back);
  }

  CriterionKind kind() const { return kind_; }
  const CriterionDiscounts& discount() const { return discount_; }
  double lambda() const { return lambda_; }
  const ClusterMap& clusters() const { return clusters_; }

  /// Current value, maintained incrementally across moves.
  double score() const { return score_; }

  /// Value recomputed from scratch with criterion_F / criterion_F_adapt.
  double recompute() const {
    if (kind_ == CriterionKind::standard) return criterion_F(table_a_, discount_);
    return criterion_F_adapt(combined(), discount_);
  }

  /// Snaps the running score back to the from-scratch value.
  void resync() { score_ = recompute(); }

  const ClassCountTable& adapt_table() const { return table_a_; }
  const ClassCountTable& back_table() const { return table_b_; }

  CombinedClassCounts combined() const {
    if (kind_ == CriterionKind::standard) return combine_counts(table_a_, table_a_, 1.0);
    return combine_counts(table_a_, table_b_, lambda_);
  }

  /// Re-derives the combined table for a new lambda (adaptive only).
  void set_lambda(double lambda) {
    if (kind_ != CriterionKind::adaptive) throw ConfigError("lambda applies to the adaptive criterion only");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
    lambda_ = lambda;
    rebuild_combined();
  }

  /// F(after) - F(before) for moving `w` from its current cluster to `to`. Tables untouched.
  double delta(WordId w, Side side, ClusterId to) const {
    check_move(w, side, to);
    Gather g = gather(w, side);
    const ClusterId from = clusters_.cluster_of(w, side);
    return finish(side, part(g, side, from, -1), part(g, side, to, +1));
  }

  /// Deltas to every regular cluster on `side`; the entry for the current cluster is 0.
  std::vector<double> candidate_deltas(WordId w, Side side) const {
    if (ClusterMap::frozen(w, side)) throw InvalidMove("word " + std::to_string(w) + " is frozen");
    const ClusterId k = clusters_.num_regular(side);
    std::vector<double> out(k, 0.0);
    Gather g = gather(w, side);
    if (g.touched.empty() && g.a_marginal == 0 && g.b_marginal == 0) return out;
    const ClusterId from = clusters_.cluster_of(w, side);
    const Partial src = part(g, side, from, -1);
    for (ClusterId t = 0; t < k; ++t)
      if (t != from) out[t] = finish(side, src, part(g, side, t, +1));
    return out;
  }

  /// Moves `w` to `to` and returns the applied delta.
  double apply(WordId w, Side side, ClusterId to) {
    check_move(w, side, to);
    Gather g = gather(w, side);
    const ClusterId from = clusters_.cluster_of(w, side);
    const double d = finish(side, part(g, side, from, -1), part(g, side, to, +1));
    const bool was_degenerate = degenerate();
    commit(g, side, from, -1);
    commit(g, side, to, +1);
    clusters_.assign(w, side, to);
    if (was_degenerate || degenerate() || !std::isfinite(d))
      score_ = recompute();
    else
      score_ += d;
    return d;
  }

 private:
  struct Adjacency {
    std::vector<std::size_t> begin;
    std::vector<std::pair<WordId, Count>> items;

    std::span<const std::pair<WordId, Count>> of(WordId w) const {
      return std::span<const std::pair<WordId, Count>>(items).subspan(begin[w], begin[w + 1] - begin[w]);
    }
  };

  struct WordCounts {
    Adjacency preds;  // w -> (v, N(v,w))
    Adjacency succs;  // v -> (w, N(v,w))
    std::vector<Count> unigram;
    std::vector<Count> context_total;
  };

  // Counts a moving word contributes, bucketed by the cluster on the other side.
  struct Gather {
    std::vector<ClusterId> touched;
    std::vector<Count> a;
    std::vector<Count> b;
    Count a_marginal = 0;
    Count b_marginal = 0;
  };

  // Change contributed by removing from / adding to one cluster.
  struct Partial {
    double terms = 0.0;
    Count d_cell_n1 = 0;
    Count d_cell_nplus = 0;
    Count d_marg_n1 = 0;
    Count d_marg_nplus = 0;
  };

  static WordCounts index_counts(const CountTable& t) {
    const std::size_t V = t.vocab_size();
    WordCounts wc;
    wc.unigram.assign(t.unigrams().begin(), t.unigrams().end());
    wc.context_total.resize(V);
    for (std::size_t v = 0; v < V; ++v) wc.context_total[v] = t.context_total(static_cast<WordId>(v));
    wc.succs.begin.assign(V + 1, 0);
    wc.preds.begin.assign(V + 1, 0);
    for (const auto& e : t.bigrams()) {
      ++wc.succs.begin[e.context + 1];
      ++wc.preds.begin[e.word + 1];
    }
    for (std::size_t i = 0; i < V; ++i) {
      wc.succs.begin[i + 1] += wc.succs.begin[i];
      wc.preds.begin[i + 1] += wc.preds.begin[i];
    }
    wc.succs.items.resize(t.bigrams().size());
    wc.preds.items.resize(t.bigrams().size());
    auto sfill = wc.succs.begin;
    auto pfill = wc.preds.begin;
    for (const auto& e : t.bigrams()) {
      wc.succs.items[sfill[e.context]++] = {e.word, e.count};
      wc.preds.items[pfill[e.word]++] = {e.context, e.count};
    }
    return wc;
  }

  void init(const CountTable& adapt, const CountTable* back) {
    if (adapt.vocab_size() != clusters_.vocab_size())
      throw ConfigError("counts and clustering differ in vocabulary size");
    S_ = clusters_.num_states();
    G_ = clusters_.num_categories();
    words_a_ = index_counts(adapt);
    table_a_ = aggregate_class_counts(adapt, clusters_);
    Count max_count = adapt.total_tokens();
    if (back) {
      words_b_ = index_counts(*back);
      table_b_ = aggregate_class_counts(*back, clusters_);
      max_count = std::max(max_count, back->total_tokens());
    } else {
      table_b_ = ClassCountTable(S_, G_);
    }
    const std::size_t n = static_cast<std::size_t>(max_count) + 2;
    auto table = [n](double b) {
      std::vector<double> t(n, 0.0);
      for (std::size_t c = 2; c < n; ++c) t[c] = std::log(static_cast<double>(c) - 1.0 - b);
      return t;
    };
    log_bigram_ = table(discount_.bigram.value());
    log_state_ = table(discount_.state.value());
    log_category_ = table(discount_.category.value());
    log_minus_1_ = table(0.0);
    rebuild_combined();
  }

  void rebuild_combined() {
    if (kind_ == CriterionKind::standard) {
      table_c_ = table_a_;
    } else {
      auto cc = combine_counts(table_a_, table_b_, lambda_);
      table_c_ = cc.combined;
    }
    n_cell_ = table_c_.cell_ncounts();
    n_state_ = NCounts::of(table_c_.state_totals());
    n_category_ = NCounts::of(table_c_.category_totals());
    score_ = recompute();
  }

  bool degenerate() const {
    if (n_cell_.nplus <= 1) return true;
    return kind_ == CriterionKind::adaptive && (n_state_.nplus <= 1 || n_category_.nplus <= 1);
  }

  void check_move(WordId w, Side side, ClusterId to) const {
    if (w < 0 || static_cast<std::size_t>(w) >= clusters_.vocab_size()) throw InvalidMove("word id out of range");
    if (ClusterMap::frozen(w, side))
      throw InvalidMove("word " + std::to_string(w) + " is frozen on the " + side_name(side) + " side");
    if (to < 0 || to >= clusters_.num_regular(side)) throw InvalidMove("target cluster out of range");
    if (to == clusters_.cluster_of(w, side)) throw InvalidMove("source and target cluster are the same");
  }

  // log(c - 1 - b) from a precomputed table; the direct formula past its end.
  static double lookup_log(const std::vector<double>& t, Count c, double b) {
    return static_cast<std::size_t>(c) < t.size() ? t[c] : std::log(static_cast<double>(c) - 1.0 - b);
  }

  Count combine(Count a, Count b) const {
    return kind_ == CriterionKind::standard ? a : interpolate_round(a, b, lambda_);
  }
  // a: adaptation count, c: combined count (== a in standard mode).
  double cell_term(Count a, Count c) const {
    const double b = discount_.bigram.value();
    if (kind_ == CriterionKind::standard) return a > 1 ? static_cast<double>(a) * lookup_log(log_bigram_, a, b) : 0.0;
    return (a >= 1 && c > 1) ? static_cast<double>(a) * lookup_log(log_bigram_, c, b) : 0.0;
  }
  double marginal_term(Side side, Count a, Count c) const {
    if (kind_ == CriterionKind::standard) return a > 1 ? static_cast<double>(a) * lookup_log(log_minus_1_, a, 0.0) : 0.0;
    const bool cat = side == Side::category;
    const double b = cat ? discount_.category.value() : discount_.state.value();
    return (a >= 1 && c > 1) ? static_cast<double>(a) * lookup_log(cat ? log_category_ : log_state_, c, b) : 0.0;
  }

  static void tally(Count old_c, Count new_c, Count& d_n1, Count& d_nplus) {
    d_n1 += static_cast<Count>(new_c == 1) - static_cast<Count>(old_c == 1);
    d_nplus += static_cast<Count>(new_c > 0) - static_cast<Count>(old_c > 0);
  }

  std::size_t cell_index(Side side, ClusterId moving, ClusterId other) const {
    return side == Side::category ? static_cast<std::size_t>(other) * G_ + moving
                                  : static_cast<std::size_t>(moving) * G_ + other;
  }

  Gather gather(WordId w, Side side) const {
    const ClusterId others = side == Side::category ? S_ : G_;
    Gather g;
    g.a.assign(others, 0);
    g.b.assign(others, 0);
    auto collect = [&](const WordCounts& wc, std::vector<Count>& acc) {
      if (wc.unigram.empty()) return;
      const auto& adj = side == Side::category ? wc.preds : wc.succs;
      for (const auto& [x, n] : adj.of(w)) {
        const ClusterId o = side == Side::category ? clusters_.state_of(x) : clusters_.category_of(x);
        if (g.a[o] == 0 && g.b[o] == 0) g.touched.push_back(o);
        acc[o] += n;
      }
    };
    collect(words_a_, g.a);
    collect(words_b_, g.b);
    if (side == Side::category) {
      g.a_marginal = words_a_.unigram[w];
      g.b_marginal = words_b_.unigram.empty() ? 0 : words_b_.unigram[w];
    } else {
      g.a_marginal = words_a_.context_total[w];
      g.b_marginal = words_b_.context_total.empty() ? 0 : words_b_.context_total[w];
    }
    return g;
  }

  Partial part(const Gather& g, Side side, ClusterId cluster, int sign) const {
    Partial p;
    const auto cells_a = table_a_.cells();
    const auto cells_b = table_b_.cells();
    const auto cells_c = table_c_.cells();
    for (ClusterId o : g.touched) {
      const std::size_t i = cell_index(side, cluster, o);
      const Count a_new = cells_a[i] + sign * g.a[o];
      const Count c_new = combine(a_new, cells_b[i] + sign * g.b[o]);
      p.terms += cell_term(a_new, c_new) - cell_term(cells_a[i], cells_c[i]);
      tally(cells_c[i], c_new, p.d_cell_n1, p.d_cell_nplus);
    }
    const auto ma = side == Side::category ? table_a_.category_totals() : table_a_.state_totals();
    const auto mb = side == Side::category ? table_b_.category_totals() : table_b_.state_totals();
    const auto mc = side == Side::category ? table_c_.category_totals() : table_c_.state_totals();
    const Count a_new = ma[cluster] + sign * g.a_marginal;
    const Count c_new = combine(a_new, mb[cluster] + sign * g.b_marginal);
    p.terms -= marginal_term(side, a_new, c_new) - marginal_term(side, ma[cluster], mc[cluster]);
    tally(mc[cluster], c_new, p.d_marg_n1, p.d_marg_nplus);
    return p;
  }

  static double singleton_change(const NCounts& old_n, Count d_n1, Count d_nplus, Count cells, double b) {
    NCounts new_n{0, old_n.n1 + d_n1, old_n.nplus + d_nplus};
    new_n.n0 = cells - new_n.nplus;
    auto before = detail::singleton_term(old_n, b);
    auto after = detail::singleton_term(new_n, b);
    if (!before && !after) return 0.0;
    if (!after) return kDegenerate;
    if (!before) return std::numeric_limits<double>::infinity();
    return *after - *before;
  }

  double finish(Side side, const Partial& src, const Partial& tgt) const {
    double d = src.terms + tgt.terms;
    d += singleton_change(n_cell_, src.d_cell_n1 + tgt.d_cell_n1, src.d_cell_nplus + tgt.d_cell_nplus,
                          static_cast<Count>(S_) * G_, discount_.bigram.value());
    if (kind_ == CriterionKind::adaptive) {
      const NCounts& nm = side == Side::category ? n_category_ : n_state_;
      const Count size = side == Side::category ? G_ : S_;
      const double b = side == Side::category ? discount_.category.value() : discount_.state.value();
      d -= singleton_change(nm, src.d_marg_n1 + tgt.d_marg_n1, src.d_marg_nplus + tgt.d_marg_nplus, size, b);
    }
    return d;
  }

  void commit(const Gather& g, Side side, ClusterId cluster, int sign) {
    for (ClusterId o : g.touched) {
      const ClusterId s = side == Side::category ? o : cluster;
      const ClusterId k = side == Side::category ? cluster : o;
      Count& a = table_a_.cell(s, k);
      Count& bb = table_b_.cell(s, k);
      Count& c = table_c_.cell(s, k);
      a += sign * g.a[o];
      bb += sign * g.b[o];
      const Count c_new = combine(a, bb);
      Count d1 = 0, dp = 0;
      tally(c, c_new, d1, dp);
      n_cell_.n1 += d1;
      n_cell_.nplus += dp;
      c = c_new;
    }
    n_cell_.n0 = static_cast<Count>(S_) * G_ - n_cell_.nplus;
    Count& ma = side == Side::category ? table_a_.category_total(cluster) : table_a_.state_total(cluster);
    Count& mb = side == Side::category ? table_b_.category_total(cluster) : table_b_.state_total(cluster);
    Count& mc = side == Side::category ? table_c_.category_total(cluster) : table_c_.state_total(cluster);
    ma += sign * g.a_marginal;
    mb += sign * g.b_marginal;
    const Count c_new = combine(ma, mb);
    NCounts& nm = side == Side::category ? n_category_ : n_state_;
    Count d1 = 0, dp = 0;
    tally(mc, c_new, d1, dp);
    nm.n1 += d1;
    nm.nplus += dp;
    nm.n0 = (side == Side::category ? G_ : S_) - nm.nplus;
    mc = c_new;
  }

  CriterionKind kind_;
  CriterionDiscounts discount_;
  double lambda_ = 1.0;
  ClusterMap clusters_;
  ClusterId S_ = 0;
  ClusterId G_ = 0;
  WordCounts words_a_;
  WordCounts words_b_;
  ClassCountTable table_a_;
  ClassCountTable table_b_;
  ClassCountTable table_c_;
  NCounts n_cell_;
  NCounts n_state_;
  NCounts n_category_;
  std::vector<double> log_bigram_;    // log(c - 1 - B_bigram)
  std::vector<double> log_state_;     // log(c - 1 - B_state)
  std::vector<double> log_category_;  // log(c - 1 - B_category)
  std::vector<double> log_minus_1_;   // log(c - 1)
  double score_ = 0.0;
};

/// F(after) - F(before) for moving `element` on `side` from `from` to `to`.
inline double delta_for_move(const CriterionState& state, WordId element, Side side, ClusterId from, ClusterId to) {
  if (ClusterMap::frozen(element, side))
    throw InvalidMove("word " + std::to_string(element) + " is frozen on the " + side_name(side) + " side");
  if (state.clusters().cluster_of(element, side) != from)
    throw InvalidMove("word " + std::to_string(element) + " is not in the stated source cluster");
  return state.delta(element, side, to);
}

}  // namespace classlm
