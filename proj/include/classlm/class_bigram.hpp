#pragma once

// Two-factor class bigram: p(w|v) = p(G(w) | S(v)) * p(w | G(w)).

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "classlm/backoff_bigram.hpp"
#include "classlm/common.hpp"
#include "classlm/discounting.hpp"
#include "classlm/text_corpus.hpp"

namespace classlm {

enum class Side { state, category };

inline const char* side_name(Side s) { return s == Side::state ? "state" : "category"; }

/// State map S (context word -> state) and category map G (word -> category).
///
/// Regular clusters are numbered first. One extra state holds <s> (and </s>, which is
/// never a context); two extra categories hold </s> and <unk>. <s> is parked in the
/// </s> category but is never predicted. All of these placements are frozen.
class ClusterMap {
 public:
  ClusterMap() = default;

  ClusterMap(std::size_t vocab_size, ClusterId regular_states, ClusterId regular_categories)
      : regular_states_(regular_states), regular_categories_(regular_categories),
        state_of_(vocab_size, regular_states - 1), category_of_(vocab_size, regular_categories - 1) {
    if (vocab_size < Vocabulary::kNumReserved) throw ConfigError("vocabulary too small for a clustering");
    if (regular_states < 1 || regular_categories < 1) throw ConfigError("cluster counts must be positive");
    state_of_[Vocabulary::kBos] = bos_state();
    state_of_[Vocabulary::kEos] = bos_state();
    category_of_[Vocabulary::kBos] = eos_category();
    category_of_[Vocabulary::kEos] = eos_category();
    category_of_[Vocabulary::kUnk] = unk_category();
  }

  std::size_t vocab_size() const { return state_of_.size(); }
  ClusterId regular_states() const { return regular_states_; }
  ClusterId regular_categories() const { return regular_categories_; }
  ClusterId num_states() const { return regular_states_ + 1; }
  ClusterId num_categories() const { return regular_categories_ + 2; }
  ClusterId bos_state() const { return regular_states_; }
  ClusterId eos_category() const { return regular_categories_; }
  ClusterId unk_category() const { return regular_categories_ + 1; }

  ClusterId state_of(WordId w) const { return state_of_[w]; }
  ClusterId category_of(WordId w) const { return category_of_[w]; }
  ClusterId cluster_of(WordId w, Side side) const { return side == Side::state ? state_of_[w] : category_of_[w]; }
  ClusterId num_clusters(Side side) const { return side == Side::state ? num_states() : num_categories(); }
  ClusterId num_regular(Side side) const { return side == Side::state ? regular_states_ : regular_categories_; }

  static bool frozen(WordId w, Side side) {
    if (w == Vocabulary::kBos || w == Vocabulary::kEos) return true;
    return side == Side::category && w == Vocabulary::kUnk;
  }

  /// Frozen words cannot be reassigned, and regular words only go to regular clusters.
  void assign(WordId w, Side side, ClusterId c) {
    if (frozen(w, side)) throw InvalidMove("word " + std::to_string(w) + " is frozen on the " + side_name(side) + " side");
    if (c < 0 || c >= num_regular(side)) throw InvalidMove("cluster id " + std::to_string(c) + " out of range");
    (side == Side::state ? state_of_ : category_of_)[w] = c;
  }

  bool operator==(const ClusterMap&) const = default;

 private:
  ClusterId regular_states_ = 0;
  ClusterId regular_categories_ = 0;
  std::vector<ClusterId> state_of_;
  std::vector<ClusterId> category_of_;
};

/// Words ordered by descending unigram count, lexicographic tie-break.
inline std::vector<WordId> words_by_frequency(std::span<const Count> unigram, const Vocabulary& vocab) {
  std::vector<WordId> order(vocab.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](WordId a, WordId b) {
    if (unigram[a] != unigram[b]) return unigram[a] > unigram[b];
    return vocab.word(a) < vocab.word(b);
  });
  return order;
}

/// The K-1 most frequent movable words become singletons 0..K-2; the rest share K-1.
inline ClusterMap init_clustering(const CountTable& counts, const Vocabulary& vocab, ClusterId num_states,
                                  ClusterId num_categories) {
  if (counts.vocab_size() != vocab.size()) throw ConfigError("counts and vocabulary differ in size");
  if (num_states < 2 || num_categories < 2) throw ConfigError("need at least 2 clusters per side");
  const auto movable_states = static_cast<ClusterId>(vocab.size() - 2);
  const auto movable_categories = static_cast<ClusterId>(vocab.size() - 3);
  if (num_states > movable_states || num_categories > movable_categories)
    throw ConfigError("more clusters requested than there are words to place in them");
  ClusterMap cm(vocab.size(), num_states, num_categories);
  const auto order = words_by_frequency(counts.unigrams(), vocab);
  for (Side side : {Side::state, Side::category}) {
    ClusterId next = 0;
    const ClusterId k = cm.num_regular(side);
    for (WordId w : order) {
      if (ClusterMap::frozen(w, side)) continue;
      cm.assign(w, side, std::min(next, k - 1));
      if (next < k - 1) ++next;
    }
  }
  return cm;
}

/// Carries a clustering over to another vocabulary by word string. Words the source does not
/// know go to the last regular cluster, which is where initialization puts the rare words.
inline ClusterMap remap_clustering(const ClusterMap& src, const Vocabulary& src_vocab, const Vocabulary& dst_vocab) {
  ClusterMap out(dst_vocab.size(), src.regular_states(), src.regular_categories());
  for (std::size_t i = 0; i < dst_vocab.size(); ++i) {
    const auto w = static_cast<WordId>(i);
    auto found = src_vocab.find(dst_vocab.word(w));
    for (Side side : {Side::state, Side::category}) {
      if (ClusterMap::frozen(w, side)) continue;
      ClusterId c = out.num_regular(side) - 1;
      if (found) c = src.cluster_of(*found, side);
      out.assign(w, side, c);
    }
  }
  return out;
}

/// The three discounts a class model uses: on the (state, category) table, on the word
/// unigram that shapes the category fallback, and on word counts within a category.
struct ClassDiscounts {
  Discount state_category;
  Discount category;
  Discount word;
};

class ClassModel {
 public:
  struct Header {
    std::size_t vocab_size = 0;
    std::uint64_t vocab_checksum = 0;
    ClassDiscounts discounts{};
  };

  ClassModel() = default;

  /// `state_category` is row-major num_states x num_categories.
  ClassModel(Header header, ClusterMap clusters, std::vector<StoredProb> state_category,
             std::vector<StoredProb> word_given_category)
      : header_(header), clusters_(std::move(clusters)), p_gs_(std::move(state_category)),
        p_wg_(std::move(word_given_category)) {
    if (clusters_.vocab_size() != header_.vocab_size || p_wg_.size() != header_.vocab_size ||
        p_gs_.size() != static_cast<std::size_t>(clusters_.num_states()) * clusters_.num_categories())
      throw FormatError("class model sections disagree with their header");
  }

  const Header& header() const { return header_; }
  const ClusterMap& clusters() const { return clusters_; }
  std::size_t vocab_size() const { return header_.vocab_size; }

  const StoredProb& category_given_state(ClusterId s, ClusterId g) const {
    return p_gs_[static_cast<std::size_t>(s) * clusters_.num_categories() + g];
  }
  const StoredProb& word_given_category(WordId w) const { return p_wg_[w]; }

  /// p(G(w) | S(context)) * p(w | G(w)); zero only for w = <s>.
  double prob(WordId context, WordId w) const {
    if (w == Vocabulary::kBos) return 0.0;
    return category_given_state(clusters_.state_of(context), clusters_.category_of(w)).prob * p_wg_[w].prob;
  }

 private:
  Header header_;
  ClusterMap clusters_;
  std::vector<StoredProb> p_gs_;
  std::vector<StoredProb> p_wg_;
};

inline double class_prob(const ClassModel& m, WordId context, WordId w) { return m.prob(context, w); }

/// Discounts estimated from count-of-counts: class cells for p(g|s), word unigrams for the
/// other two.
inline ClassDiscounts estimate_class_discounts(const CountTable& counts, const ClusterMap& cm) {
  const ClusterId G = cm.num_categories();
  std::vector<Count> cells(static_cast<std::size_t>(cm.num_states()) * G, 0);
  for (const auto& e : counts.bigrams())
    cells[static_cast<std::size_t>(cm.state_of(e.context)) * G + cm.category_of(e.word)] += e.count;
  const Discount unigram = estimate_unigram_discount(counts);
  return {estimate_discount(CountOfCounts::of(cells)), unigram, unigram};
}

/// p(g|s): discounted N(s,g) backing off to the category unigram. The category unigram is
/// the discounted word unigram (uniform fallback over predictable words) summed over each
/// category's members, so a category of words never seen in training still carries the
/// unseen-word mass. p(w|g): discounted word counts within g backing off to uniform over
/// the category's members.
inline ClassModel estimate_class_model(const CountTable& counts, const ClusterMap& cm, const ClassDiscounts& d) {
  const std::size_t V = counts.vocab_size();
  if (cm.vocab_size() != V) throw ConfigError("counts and clustering differ in vocabulary size");
  const ClusterId S = cm.num_states();
  const ClusterId G = cm.num_categories();

  std::vector<Count> cells(static_cast<std::size_t>(S) * G, 0);
  for (const auto& e : counts.bigrams())
    cells[static_cast<std::size_t>(cm.state_of(e.context)) * G + cm.category_of(e.word)] += e.count;

  std::vector<double> cat_fallback(G, 0.0);
  {
    std::vector<Count> c(counts.unigrams().begin(), counts.unigrams().end());
    c[Vocabulary::kBos] = 0;
    std::vector<double> uniform(V, 1.0 / static_cast<double>(V - 1));
    uniform[Vocabulary::kBos] = 0.0;
    const auto pu = discounted_distribution(c, d.category, uniform);
    for (std::size_t w = 0; w < V; ++w) cat_fallback[cm.category_of(static_cast<WordId>(w))] += pu[w];
  }

  std::vector<StoredProb> p_gs(cells.size());
  for (ClusterId s = 0; s < S; ++s) {
    std::span<const Count> row(cells.data() + static_cast<std::size_t>(s) * G, G);
    auto p = discounted_distribution(row, d.state_category, cat_fallback);
    for (ClusterId g = 0; g < G; ++g) p_gs[static_cast<std::size_t>(s) * G + g] = StoredProb::from_prob(p[g]);
  }

  // Per-category word distributions, computed over each category's member list.
  std::vector<std::vector<WordId>> by_cat(G);
  for (std::size_t w = 0; w < V; ++w)
    if (static_cast<WordId>(w) != Vocabulary::kBos) by_cat[cm.category_of(static_cast<WordId>(w))].push_back(static_cast<WordId>(w));
  std::vector<StoredProb> p_wg(V);
  for (ClusterId g = 0; g < G; ++g) {
    const auto& ws = by_cat[g];
    if (ws.empty()) continue;
    std::vector<Count> c(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) c[i] = counts.unigram(ws[i]);
    std::vector<double> uniform(ws.size(), 1.0 / static_cast<double>(ws.size()));
    auto p = discounted_distribution(c, d.word, uniform);
    for (std::size_t i = 0; i < ws.size(); ++i) p_wg[ws[i]] = StoredProb::from_prob(p[i]);
  }
  ClassModel::Header h{V, counts.vocab_checksum(), d};
  return ClassModel(h, cm, std::move(p_gs), std::move(p_wg));
}

inline ClassModel estimate_class_model(const CountTable& counts, const ClusterMap& cm) {
  return estimate_class_model(counts, cm, estimate_class_discounts(counts, cm));
}

// ---- file formats ----

/// Checkpoint metadata carried by a cluster file.
struct ClusterFileMeta {
  int iteration = 0;
  double score = 0.0;
  double lambda = 1.0;
};

//   #clusters vocab_size=V states=Ks categories=Kg vocab_checksum=X iteration=i score=F lambda=l
//   word state_id category_id
inline void write_clusters(std::ostream& out, const ClusterMap& cm, const Vocabulary& vocab,
                           const ClusterFileMeta& meta = {}) {
  if (cm.vocab_size() != vocab.size()) throw ConfigError("clustering and vocabulary differ in size");
  out << "#clusters vocab_size=" << vocab.size() << " states=" << cm.regular_states()
      << " categories=" << cm.regular_categories() << " vocab_checksum=" << detail::hex64(vocab.checksum())
      << " iteration=" << meta.iteration << " score=" << detail::format_double(meta.score)
      << " lambda=" << detail::format_double(meta.lambda) << '\n';
  for (std::size_t w = 0; w < vocab.size(); ++w)
    out << vocab.word(static_cast<WordId>(w)) << ' ' << cm.state_of(static_cast<WordId>(w)) << ' '
        << cm.category_of(static_cast<WordId>(w)) << '\n';
}

struct ClusterFile {
  ClusterMap clusters;
  Vocabulary vocab;
  ClusterFileMeta meta;
};

/// Reads a cluster file; the vocabulary it was written over is reconstructed from its word column.
inline ClusterFile read_clusters(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty cluster file");
  auto h = detail::parse_header(line, "clusters");
  const auto vocab_size = static_cast<std::size_t>(detail::parse_int(h.at("vocab_size")));
  const auto ks = static_cast<ClusterId>(detail::parse_int(h.at("states")));
  const auto kg = static_cast<ClusterId>(detail::parse_int(h.at("categories")));
  ClusterFileMeta meta{static_cast<int>(detail::parse_int(h.at("iteration"))), detail::parse_double(h.at("score")),
                       detail::parse_double(h.at("lambda"))};
  std::vector<std::string> words;
  std::vector<std::pair<ClusterId, ClusterId>> ids;
  while (std::getline(in, line)) {
    auto t = detail::split_ws(line);
    if (t.empty()) continue;
    if (t.size() != 3) throw FormatError("bad cluster line: '" + line + "'");
    words.emplace_back(t[0]);
    ids.emplace_back(static_cast<ClusterId>(detail::parse_int(t[1])), static_cast<ClusterId>(detail::parse_int(t[2])));
  }
  if (words.size() != vocab_size) throw FormatError("cluster file has wrong number of entries");
  Vocabulary vocab(words);
  require_vocabulary(vocab, std::stoull(h.at("vocab_checksum"), nullptr, 16), "cluster file");
  ClusterMap cm(vocab_size, ks, kg);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    const auto w = static_cast<WordId>(i);
    for (Side side : {Side::state, Side::category}) {
      const ClusterId c = side == Side::state ? ids[i].first : ids[i].second;
      if (ClusterMap::frozen(w, side)) {
        if (c != cm.cluster_of(w, side)) throw FormatError("reserved token placed outside its dedicated cluster");
        continue;
      }
      try {
        cm.assign(w, side, c);
      } catch (const InvalidMove& e) {
        throw FormatError(std::string("cluster file: ") + e.what());
      }
    }
  }
  return {std::move(cm), std::move(vocab), meta};
}

//   #class vocab_size=V states=Ks categories=Kg vocab_checksum=X discount_state_category=..
//          discount_category=.. discount_word=..
//   \clusters       w state category
//   \state-category s g log10p
//   \word           w log10p
//   \end
inline void write_class_model(std::ostream& out, const ClassModel& m) {
  const auto& h = m.header();
  const auto& cm = m.clusters();
  out << "#class vocab_size=" << h.vocab_size << " states=" << cm.regular_states()
      << " categories=" << cm.regular_categories() << " vocab_checksum=" << detail::hex64(h.vocab_checksum)
      << " discount_state_category=" << detail::format_double(h.discounts.state_category.value())
      << " discount_category=" << detail::format_double(h.discounts.category.value())
      << " discount_word=" << detail::format_double(h.discounts.word.value()) << '\n';
  out << "\\clusters\n";
  for (std::size_t w = 0; w < h.vocab_size; ++w)
    out << w << ' ' << cm.state_of(static_cast<WordId>(w)) << ' ' << cm.category_of(static_cast<WordId>(w)) << '\n';
  out << "\\state-category\n";
  for (ClusterId s = 0; s < cm.num_states(); ++s)
    for (ClusterId g = 0; g < cm.num_categories(); ++g)
      out << s << ' ' << g << ' ' << detail::format_double(m.category_given_state(s, g).log10) << '\n';
  out << "\\word\n";
  for (std::size_t w = 0; w < h.vocab_size; ++w)
    out << w << ' ' << detail::format_double(m.word_given_category(static_cast<WordId>(w)).log10) << '\n';
  out << "\\end\n";
}

inline ClassModel read_class_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty class model file");
  auto hdr = detail::parse_header(line, "class");
  ClassModel::Header h;
  h.vocab_size = static_cast<std::size_t>(detail::parse_int(hdr.at("vocab_size")));
  h.vocab_checksum = std::stoull(hdr.at("vocab_checksum"), nullptr, 16);
  h.discounts = {Discount(detail::parse_double(hdr.at("discount_state_category"))),
                 Discount(detail::parse_double(hdr.at("discount_category"))),
                 Discount(detail::parse_double(hdr.at("discount_word")))};
  const auto ks = static_cast<ClusterId>(detail::parse_int(hdr.at("states")));
  const auto kg = static_cast<ClusterId>(detail::parse_int(hdr.at("categories")));
  ClusterMap cm(h.vocab_size, ks, kg);
  const std::size_t S = cm.num_states(), G = cm.num_categories(), V = h.vocab_size;
  std::vector<StoredProb> p_gs(S * G);
  std::vector<StoredProb> p_wg(V);
  auto index = [](std::string_view s, std::size_t bound) {
    auto x = detail::parse_int(s);
    if (x < 0 || static_cast<std::size_t>(x) >= bound) throw FormatError("index out of range in class model");
    return static_cast<std::size_t>(x);
  };
  std::string section;
  bool ended = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '\\') {
      section = line;
      if (section == "\\end") {
        ended = true;
        break;
      }
      continue;
    }
    auto t = detail::split_ws(line);
    if (t.empty()) continue;
    if (section == "\\clusters" && t.size() == 3) {
      const auto w = static_cast<WordId>(index(t[0], V));
      const auto s = static_cast<ClusterId>(index(t[1], S));
      const auto g = static_cast<ClusterId>(index(t[2], G));
      if (!ClusterMap::frozen(w, Side::state)) cm.assign(w, Side::state, s);
      if (!ClusterMap::frozen(w, Side::category)) cm.assign(w, Side::category, g);
    } else if (section == "\\state-category" && t.size() == 3) {
      p_gs[index(t[0], S) * G + index(t[1], G)] = StoredProb::from_log10(detail::parse_double(t[2]));
    } else if (section == "\\word" && t.size() == 2) {
      p_wg[index(t[0], V)] = StoredProb::from_log10(detail::parse_double(t[1]));
    } else {
      throw FormatError("unexpected line in class model: '" + line + "'");
    }
  }
  if (!ended) throw FormatError("class model file is truncated");
  return ClassModel(h, std::move(cm), std::move(p_gs), std::move(p_wg));
}

}  // namespace classlm
