#pragma once

// Corpus ingestion, vocabulary construction and sparse bigram counting.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "classlm/common.hpp"

namespace classlm {

using Sentence = std::vector<std::string>;
using Corpus = std::vector<Sentence>;

/// Splits on whitespace. No other normalization; corpora are expected pre-tokenized.
inline Sentence tokenize_line(std::string_view text) {
  Sentence out;
  for (auto tok : detail::split_ws(text)) out.emplace_back(tok);
  return out;
}

/// One sentence per line. Blank lines carry no events and are skipped.
inline Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    auto s = tokenize_line(line);
    if (!s.empty()) corpus.push_back(std::move(s));
  }
  return corpus;
}

inline std::size_t word_count(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& s : corpus) n += s.size();
  return n;
}

/// Longest prefix of whole sentences holding at most `max_words` words.
inline Corpus truncate_corpus(const Corpus& corpus, std::size_t max_words) {
  Corpus out;
  std::size_t n = 0;
  for (const auto& s : corpus) {
    if (n + s.size() > max_words) break;
    n += s.size();
    out.push_back(s);
  }
  return out;
}

/// Dense word <-> id map. Ids 0, 1, 2 are always <s>, </s> and <unk>.
class Vocabulary {
 public:
  static constexpr WordId kBos = 0;
  static constexpr WordId kEos = 1;
  static constexpr WordId kUnk = 2;
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::size_t kNumReserved = 3;

  Vocabulary() {
    add(std::string(kBosToken));
    add(std::string(kEosToken));
    add(std::string(kUnkToken));
  }

  /// Rebuilds a vocabulary from its entry list (reserved tokens first, no duplicates).
  explicit Vocabulary(const std::vector<std::string>& entries) {
    if (entries.size() < kNumReserved || entries[kBos] != kBosToken || entries[kEos] != kEosToken ||
        entries[kUnk] != kUnkToken)
      throw FormatError("vocabulary must start with <s>, </s>, <unk>");
    for (const auto& w : entries) {
      if (w.empty() || detail::split_ws(w).size() != 1) throw FormatError("invalid vocabulary entry '" + w + "'");
      if (index_.count(w)) throw FormatError("duplicate vocabulary entry '" + w + "'");
      add(w);
    }
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& word(WordId id) const { return entries_.at(static_cast<std::size_t>(id)); }

  std::optional<WordId> find(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& w) const { return index_.count(w) != 0; }
  WordId lookup(const std::string& w) const { return find(w).value_or(kUnk); }

  /// Returns the existing id when `w` is already present.
  WordId add(const std::string& w) {
    auto [it, inserted] = index_.emplace(w, static_cast<WordId>(entries_.size()));
    if (inserted) entries_.push_back(w);
    return it->second;
  }

  /// FNV-1a over the newline-joined entries; embedded in every artifact header.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& w : entries_) {
      for (unsigned char c : w) {
        h ^= c;
        h *= 1099511628211ULL;
      }
      h ^= '\n';
      h *= 1099511628211ULL;
    }
    return h;
  }

  bool operator==(const Vocabulary& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, WordId> index_;
};

namespace detail {

using FrequencyList = std::vector<std::pair<std::string, Count>>;

// Descending frequency, lexicographic tie-break.
inline FrequencyList ranked_words(const Corpus& corpus) {
  std::unordered_map<std::string, Count> freq;
  for (const auto& s : corpus)
    for (const auto& w : s) ++freq[w];
  FrequencyList out(freq.begin(), freq.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

inline bool is_reserved_token(std::string_view w) {
  return w == Vocabulary::kBosToken || w == Vocabulary::kEosToken || w == Vocabulary::kUnkToken;
}

}  // namespace detail

/// Reserved tokens, then every adaptation word, then the most frequent background words
/// until `max_size` entries. If the adaptation words alone overflow, the most frequent of
/// them are kept. Reserved tokens count toward `max_size`.
inline Vocabulary build_vocabulary(const Corpus& adapt_corpus, const Corpus& back_corpus, std::size_t max_size) {
  if (max_size < 4) throw ConfigError("vocabulary size must be at least 4");
  Vocabulary vocab;
  for (const auto& [w, n] : detail::ranked_words(adapt_corpus)) {
    if (vocab.size() >= max_size) break;
    if (!detail::is_reserved_token(w)) vocab.add(w);
  }
  for (const auto& [w, n] : detail::ranked_words(back_corpus)) {
    if (vocab.size() >= max_size) break;
    if (!detail::is_reserved_token(w)) vocab.add(w);
  }
  return vocab;
}

struct BigramCount {
  WordId context;
  WordId word;
  Count count;

  bool operator==(const BigramCount&) const = default;
};

/// Sparse bigram counts N(v,w) with derived unigram (predicted-position) and context totals.
class CountTable {
 public:
  CountTable() = default;

  /// Duplicates are summed, zero entries dropped.
  CountTable(std::size_t vocab_size, std::uint64_t vocab_checksum, std::vector<BigramCount> entries)
      : vocab_size_(vocab_size), vocab_checksum_(vocab_checksum) {
    for (const auto& e : entries) {
      if (e.context < 0 || e.word < 0 || static_cast<std::size_t>(e.context) >= vocab_size ||
          static_cast<std::size_t>(e.word) >= vocab_size)
        throw FormatError("bigram id out of range");
      if (e.count < 0) throw FormatError("negative count");
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.context != b.context ? a.context < b.context : a.word < b.word;
    });
    for (const auto& e : entries) {
      if (e.count == 0) continue;
      if (!bigrams_.empty() && bigrams_.back().context == e.context && bigrams_.back().word == e.word)
        bigrams_.back().count += e.count;
      else
        bigrams_.push_back(e);
    }
    unigram_.assign(vocab_size, 0);
    context_total_.assign(vocab_size, 0);
    row_begin_.assign(vocab_size + 1, 0);
    for (const auto& e : bigrams_) {
      unigram_[e.word] += e.count;
      context_total_[e.context] += e.count;
      ++row_begin_[e.context + 1];
      total_ += e.count;
    }
    for (std::size_t v = 0; v < vocab_size; ++v) row_begin_[v + 1] += row_begin_[v];
  }

  std::size_t vocab_size() const { return vocab_size_; }
  std::uint64_t vocab_checksum() const { return vocab_checksum_; }
  Count total_tokens() const { return total_; }

  std::span<const BigramCount> bigrams() const { return bigrams_; }
  std::span<const BigramCount> row(WordId v) const {
    return std::span<const BigramCount>(bigrams_).subspan(row_begin_[v], row_begin_[v + 1] - row_begin_[v]);
  }
  Count bigram(WordId v, WordId w) const {
    auto r = row(v);
    auto it = std::lower_bound(r.begin(), r.end(), w, [](const BigramCount& e, WordId x) { return e.word < x; });
    return (it != r.end() && it->word == w) ? it->count : 0;
  }
  /// Occurrences of `w` as a predicted word.
  Count unigram(WordId w) const { return unigram_[w]; }
  std::span<const Count> unigrams() const { return unigram_; }
  /// Occurrences of `v` as a context.
  Count context_total(WordId v) const { return context_total_[v]; }

  bool operator==(const CountTable& o) const {
    return vocab_size_ == o.vocab_size_ && vocab_checksum_ == o.vocab_checksum_ && bigrams_ == o.bigrams_;
  }

 private:
  std::size_t vocab_size_ = 0;
  std::uint64_t vocab_checksum_ = 0;
  std::vector<BigramCount> bigrams_;
  std::vector<std::size_t> row_begin_{0};
  std::vector<Count> unigram_;
  std::vector<Count> context_total_;
  Count total_ = 0;
};

/// Sums two tables over the same vocabulary.
inline CountTable merge_counts(const CountTable& a, const CountTable& b) {
  if (a.vocab_size() != b.vocab_size() || a.vocab_checksum() != b.vocab_checksum())
    throw ConfigError("cannot merge count tables over different vocabularies");
  std::vector<BigramCount> all(a.bigrams().begin(), a.bigrams().end());
  all.insert(all.end(), b.bigrams().begin(), b.bigrams().end());
  return CountTable(a.vocab_size(), a.vocab_checksum(), std::move(all));
}

/// Each sentence is framed as <s> w1 .. wn </s>. OOV words, and literal boundary
/// tokens inside the text, count as <unk>.
inline CountTable count_events(std::span<const Sentence> corpus, const Vocabulary& vocab) {
  std::unordered_map<std::uint64_t, Count> acc;
  for (const auto& s : corpus) {
    WordId prev = Vocabulary::kBos;
    for (const auto& tok : s) {
      WordId cur = vocab.lookup(tok);
      if (cur == Vocabulary::kBos || cur == Vocabulary::kEos) cur = Vocabulary::kUnk;
      ++acc[(static_cast<std::uint64_t>(prev) << 32) | static_cast<std::uint32_t>(cur)];
      prev = cur;
    }
    ++acc[(static_cast<std::uint64_t>(prev) << 32) | static_cast<std::uint32_t>(Vocabulary::kEos)];
  }
  std::vector<BigramCount> entries;
  entries.reserve(acc.size());
  for (const auto& [key, n] : acc)
    entries.push_back({static_cast<WordId>(key >> 32), static_cast<WordId>(key & 0xffffffffu), n});
  return CountTable(vocab.size(), vocab.checksum(), std::move(entries));
}

inline CountTable count_events(const Corpus& corpus, const Vocabulary& vocab) {
  return count_events(std::span<const Sentence>(corpus), vocab);
}

/// Counts disjoint shards on separate threads and merges by summation.
inline CountTable count_events_sharded(const Corpus& corpus, const Vocabulary& vocab, std::size_t shards) {
  shards = std::max<std::size_t>(1, std::min(shards, corpus.size()));
  std::vector<CountTable> parts(shards);
  std::vector<std::thread> workers;
  const std::size_t per = (corpus.size() + shards - 1) / std::max<std::size_t>(shards, 1);
  for (std::size_t i = 0; i < shards; ++i) {
    workers.emplace_back([&, i] {
      std::size_t lo = std::min(corpus.size(), i * per);
      std::size_t hi = std::min(corpus.size(), lo + per);
      parts[i] = count_events(std::span<const Sentence>(corpus).subspan(lo, hi - lo), vocab);
    });
  }
  for (auto& t : workers) t.join();
  CountTable out(vocab.size(), vocab.checksum(), {});
  for (const auto& p : parts) out = merge_counts(out, p);
  return out;
}

// ---- file formats ----

/// One word per line; line number is the id.
inline void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (const auto& w : vocab.entries()) out << w << '\n';
}

inline Vocabulary read_vocabulary(std::istream& in) {
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    entries.push_back(line);
  }
  return Vocabulary(entries);
}

inline void write_counts(std::ostream& out, const CountTable& t) {
  out << "#counts vocab_size=" << t.vocab_size() << " total_tokens=" << t.total_tokens()
      << " vocab_checksum=" << detail::hex64(t.vocab_checksum()) << '\n';
  for (const auto& e : t.bigrams()) out << e.context << ' ' << e.word << ' ' << e.count << '\n';
}

inline CountTable read_counts(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty count file");
  auto h = detail::parse_header(line, "counts");
  auto vocab_size = static_cast<std::size_t>(detail::parse_int(h.at("vocab_size")));
  auto total = detail::parse_int(h.at("total_tokens"));
  auto checksum = std::stoull(h.at("vocab_checksum"), nullptr, 16);
  std::vector<BigramCount> entries;
  while (std::getline(in, line)) {
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 3) throw FormatError("bad count line: '" + line + "'");
    entries.push_back({static_cast<WordId>(detail::parse_int(toks[0])), static_cast<WordId>(detail::parse_int(toks[1])),
                       detail::parse_int(toks[2])});
  }
  CountTable t(vocab_size, checksum, std::move(entries));
  if (t.total_tokens() != total) throw FormatError("count file total_tokens does not match its entries");
  return t;
}

inline void require_vocabulary(const Vocabulary& vocab, std::uint64_t checksum, std::string_view what) {
  if (vocab.checksum() != checksum)
    throw FormatError(std::string(what) + " was built over a different vocabulary (checksum " +
                      detail::hex64(checksum) + ", expected " + detail::hex64(vocab.checksum()) + ")");
}

}  // namespace classlm
