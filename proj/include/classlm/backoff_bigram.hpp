#pragma once

// Backoff bigram with absolute discounting, and the fill-up adaptation scheme.

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "classlm/common.hpp"
#include "classlm/discounting.hpp"
#include "classlm/text_corpus.hpp"

namespace classlm {

/// A probability kept together with the log10 value it is serialized as, so that
/// write -> read -> write reproduces identical bytes.
struct StoredProb {
  double prob = 0.0;
  double log10 = -INFINITY;

  static StoredProb from_prob(double p) { return {p, std::log10(p)}; }
  static StoredProb from_log10(double l) { return {std::pow(10.0, l), l}; }
};

struct ExplicitBigram {
  WordId word;
  StoredProb p;
};

/// Bigram model: explicit p(w|v) for retained pairs; every other word receives
/// alpha(v) * p_uni(w) / Z(v), where alpha(v) is the context's non-explicit mass and
/// Z(v) the unigram mass of its non-explicit words. <s> is never predicted.
class BackoffModel {
 public:
  struct Header {
    std::size_t vocab_size = 0;
    std::uint64_t vocab_checksum = 0;
    double discount = Discount::kDefault;
    Count cutoff = 0;
  };

  BackoffModel() = default;

  /// `rows[v]` sorted by word id. Z(v) is derived here, once, so queries never mutate.
  BackoffModel(Header header, std::vector<std::vector<ExplicitBigram>> rows, std::vector<double> alpha,
               std::vector<StoredProb> unigram)
      : header_(header), alpha_(std::move(alpha)), unigram_(std::move(unigram)) {
    const std::size_t V = header_.vocab_size;
    if (rows.size() != V || alpha_.size() != V || unigram_.size() != V)
      throw FormatError("backoff model sections disagree with vocab_size");
    row_begin_.assign(V + 1, 0);
    for (std::size_t v = 0; v < V; ++v) {
      auto& r = rows[v];
      std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.word < b.word; });
      for (std::size_t i = 1; i < r.size(); ++i)
        if (r[i].word == r[i - 1].word) throw FormatError("duplicate explicit bigram");
      row_begin_[v + 1] = row_begin_[v] + r.size();
      entries_.insert(entries_.end(), r.begin(), r.end());
    }
    long double uni_total = 0.0L;
    for (std::size_t w = 0; w < V; ++w)
      if (static_cast<WordId>(w) != Vocabulary::kBos) uni_total += unigram_[w].prob;
    renorm_.assign(V, 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      long double z = uni_total;
      for (const auto& e : row(static_cast<WordId>(v)))
        if (e.word != Vocabulary::kBos) z -= unigram_[e.word].prob;
      renorm_[v] = static_cast<double>(std::max(z, 0.0L));
    }
  }

  const Header& header() const { return header_; }
  std::size_t vocab_size() const { return header_.vocab_size; }

  std::span<const ExplicitBigram> row(WordId v) const {
    return std::span<const ExplicitBigram>(entries_).subspan(row_begin_[v], row_begin_[v + 1] - row_begin_[v]);
  }
  const ExplicitBigram* find_explicit(WordId v, WordId w) const {
    auto r = row(v);
    auto it = std::lower_bound(r.begin(), r.end(), w, [](const ExplicitBigram& e, WordId x) { return e.word < x; });
    return (it != r.end() && it->word == w) ? &*it : nullptr;
  }
  double alpha(WordId v) const { return alpha_[v]; }
  double renormalizer(WordId v) const { return renorm_[v]; }
  const StoredProb& unigram(WordId w) const { return unigram_[w]; }

  /// p(w|v); zero only for w = <s>.
  double prob(WordId v, WordId w) const {
    if (w == Vocabulary::kBos) return 0.0;
    if (const auto* e = find_explicit(v, w)) return e->p.prob;
    if (renorm_[v] <= 0.0) return 0.0;
    return alpha_[v] * unigram_[w].prob / renorm_[v];
  }

 private:
  Header header_;
  std::vector<std::size_t> row_begin_{0};
  std::vector<ExplicitBigram> entries_;
  std::vector<double> alpha_;
  std::vector<double> renorm_;
  std::vector<StoredProb> unigram_;
};

namespace detail {

// Discounted unigram over predictable words (everything but <s>) with uniform fallback.
inline std::vector<StoredProb> backoff_unigram(const CountTable& counts, Discount discount) {
  const std::size_t V = counts.vocab_size();
  std::vector<Count> c(counts.unigrams().begin(), counts.unigrams().end());
  c[Vocabulary::kBos] = 0;
  std::vector<double> uniform(V, 1.0 / static_cast<double>(V - 1));
  uniform[Vocabulary::kBos] = 0.0;
  auto p = discounted_distribution(c, discount, uniform);
  std::vector<StoredProb> out(V);
  for (std::size_t w = 0; w < V; ++w) out[w] = StoredProb::from_prob(p[w]);
  return out;
}

// When every predictable word is explicit there is nowhere for alpha to go: fold it back
// into the explicit entries.
inline void absorb_reserve_if_saturated(std::vector<ExplicitBigram>& row, double& alpha, std::size_t vocab_size) {
  std::size_t predictable = 0;
  for (const auto& e : row)
    if (e.word != Vocabulary::kBos) ++predictable;
  if (predictable < vocab_size - 1 || alpha == 0.0) return;
  const double scale = 1.0 / (1.0 - alpha);
  for (auto& e : row) e.p = StoredProb::from_prob(e.p.prob * scale);
  alpha = 0.0;
}

}  // namespace detail

inline Discount estimate_unigram_discount(const CountTable& counts) {
  return estimate_discount(CountOfCounts::of(counts.unigrams()));
}

inline Discount estimate_bigram_discount(const CountTable& counts) {
  CountOfCounts h;
  for (const auto& e : counts.bigrams()) h.add(e.count);
  return estimate_discount(h);
}

/// Bigrams with count <= cutoff are treated as unseen; their mass joins the backoff reserve.
inline BackoffModel train_backoff(const CountTable& counts, Discount discount, Count cutoff,
                                  std::optional<Discount> unigram_discount = std::nullopt) {
  const std::size_t V = counts.vocab_size();
  if (V < Vocabulary::kNumReserved + 1) throw ConfigError("vocabulary too small for a backoff model");
  if (counts.total_tokens() == 0) throw ConfigError("cannot train a backoff model on empty counts");
  if (cutoff < 0) throw ConfigError("cutoff must be nonnegative");
  const double b = discount.value();
  std::vector<std::vector<ExplicitBigram>> rows(V);
  std::vector<double> alpha(V, 1.0);
  for (std::size_t v = 0; v < V; ++v) {
    const Count n = counts.context_total(static_cast<WordId>(v));
    if (n == 0) continue;
    Count kept = 0;
    Count dropped = 0;
    for (const auto& e : counts.row(static_cast<WordId>(v))) {
      if (e.count <= cutoff) {
        dropped += e.count;
        continue;
      }
      ++kept;
      rows[v].push_back({e.word, StoredProb::from_prob((static_cast<double>(e.count) - b) / static_cast<double>(n))});
    }
    alpha[v] = (b * static_cast<double>(kept) + static_cast<double>(dropped)) / static_cast<double>(n);
    detail::absorb_reserve_if_saturated(rows[v], alpha[v], V);
  }
  BackoffModel::Header h{V, counts.vocab_checksum(), b, cutoff};
  return BackoffModel(h, std::move(rows), std::move(alpha),
                      detail::backoff_unigram(counts, unigram_discount.value_or(estimate_unigram_discount(counts))));
}

/// Fill-up adaptation. Where the adaptation data has seen a transition, its discounted
/// estimate (N_A(v,w) - B)/N_A(v) is used; the reserved mass B n+(v)/N_A(v) is spread over
/// the remaining words in proportion to the background model's p(w|v). Contexts absent
/// from the adaptation data keep the background distribution unchanged.
inline BackoffModel fillup(const CountTable& adapt_counts, const BackoffModel& background, Discount discount) {
  const std::size_t V = background.vocab_size();
  if (adapt_counts.vocab_size() != V || adapt_counts.vocab_checksum() != background.header().vocab_checksum)
    throw ConfigError("fill-up requires adaptation counts and background model over one vocabulary");
  const double b = discount.value();
  std::vector<std::vector<ExplicitBigram>> rows(V);
  std::vector<double> alpha(V);
  std::vector<StoredProb> unigram(V);
  for (std::size_t w = 0; w < V; ++w) unigram[w] = background.unigram(static_cast<WordId>(w));

  for (std::size_t vi = 0; vi < V; ++vi) {
    const auto v = static_cast<WordId>(vi);
    const auto back_row = background.row(v);
    const Count n = adapt_counts.context_total(v);
    if (n == 0) {
      rows[vi].assign(back_row.begin(), back_row.end());
      alpha[vi] = background.alpha(v);
      continue;
    }
    const auto adapt_row = adapt_counts.row(v);
    const double nd = static_cast<double>(n);
    const double reserve = b * static_cast<double>(adapt_row.size()) / nd;

    // Background mass on adaptation-observed words, split by how the background holds it.
    long double observed_back = 0.0L;
    long double observed_backoff_uni = 0.0L;
    for (const auto& e : adapt_row) {
      observed_back += background.prob(v, e.word);
      if (!background.find_explicit(v, e.word)) observed_backoff_uni += background.unigram(e.word).prob;
    }
    const long double free_back = 1.0L - observed_back;

    for (const auto& e : adapt_row)
      rows[vi].push_back({e.word, StoredProb::from_prob((static_cast<double>(e.count) - b) / nd)});

    if (free_back <= 1e-15L) {
      // Background puts nothing outside the observed words: renormalize the adaptation estimates.
      for (auto& x : rows[vi]) x.p = StoredProb::from_prob(x.p.prob / (1.0 - reserve));
      alpha[vi] = 0.0;
      continue;
    }
    const long double scale = static_cast<long double>(reserve) / free_back;
    std::size_t ai = 0;
    for (const auto& be : back_row) {
      while (ai < adapt_row.size() && adapt_row[ai].word < be.word) ++ai;
      if (ai < adapt_row.size() && adapt_row[ai].word == be.word) continue;
      rows[vi].push_back({be.word, StoredProb::from_prob(static_cast<double>(scale * be.p.prob))});
    }
    const long double z_back = background.renormalizer(v);
    long double backoff_mass = 0.0L;
    if (z_back > 0.0L) backoff_mass = background.alpha(v) * (z_back - observed_backoff_uni) / z_back;
    alpha[vi] = static_cast<double>(std::max(0.0L, scale * backoff_mass));
  }
  BackoffModel::Header h{V, background.header().vocab_checksum, b, 0};
  return BackoffModel(h, std::move(rows), std::move(alpha), std::move(unigram));
}

// ---- file format ----
//
//   #backoff vocab_size=V discount=B cutoff=C vocab_checksum=X
//   \bigrams
//   v w log10p
//   \contexts
//   v alpha
//   \unigrams
//   w log10p
//   \end

inline void write_backoff(std::ostream& out, const BackoffModel& m) {
  const auto& h = m.header();
  out << "#backoff vocab_size=" << h.vocab_size << " discount=" << detail::format_double(h.discount)
      << " cutoff=" << h.cutoff << " vocab_checksum=" << detail::hex64(h.vocab_checksum) << '\n';
  out << "\\bigrams\n";
  for (std::size_t v = 0; v < h.vocab_size; ++v)
    for (const auto& e : m.row(static_cast<WordId>(v)))
      out << v << ' ' << e.word << ' ' << detail::format_double(e.p.log10) << '\n';
  out << "\\contexts\n";
  for (std::size_t v = 0; v < h.vocab_size; ++v)
    out << v << ' ' << detail::format_double(m.alpha(static_cast<WordId>(v))) << '\n';
  out << "\\unigrams\n";
  for (std::size_t w = 0; w < h.vocab_size; ++w)
    out << w << ' ' << detail::format_double(m.unigram(static_cast<WordId>(w)).log10) << '\n';
  out << "\\end\n";
}

inline BackoffModel read_backoff(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty backoff model file");
  auto hdr = detail::parse_header(line, "backoff");
  BackoffModel::Header h;
  h.vocab_size = static_cast<std::size_t>(detail::parse_int(hdr.at("vocab_size")));
  h.discount = detail::parse_double(hdr.at("discount"));
  h.cutoff = detail::parse_int(hdr.at("cutoff"));
  h.vocab_checksum = std::stoull(hdr.at("vocab_checksum"), nullptr, 16);
  const std::size_t V = h.vocab_size;
  auto id = [&](std::string_view s) {
    auto x = detail::parse_int(s);
    if (x < 0 || static_cast<std::size_t>(x) >= V) throw FormatError("word id out of range in backoff model");
    return static_cast<WordId>(x);
  };
  std::vector<std::vector<ExplicitBigram>> rows(V);
  std::vector<double> alpha(V, 1.0);
  std::vector<StoredProb> unigram(V);
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
    if (section == "\\bigrams" && t.size() == 3)
      rows[id(t[0])].push_back({id(t[1]), StoredProb::from_log10(detail::parse_double(t[2]))});
    else if (section == "\\contexts" && t.size() == 2)
      alpha[id(t[0])] = detail::parse_double(t[1]);
    else if (section == "\\unigrams" && t.size() == 2)
      unigram[id(t[0])] = StoredProb::from_log10(detail::parse_double(t[1]));
    else
      throw FormatError("unexpected line in backoff model: '" + line + "'");
  }
  if (!ended) throw FormatError("backoff model file is truncated");
  return BackoffModel(h, std::move(rows), std::move(alpha), std::move(unigram));
}

}  // namespace classlm
