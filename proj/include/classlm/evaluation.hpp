#pragma once

// Held-out perplexity, relative-improvement arithmetic, and the six-configuration
// experiment suite with its report tables.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "classlm/backoff_bigram.hpp"
#include "classlm/class_bigram.hpp"
#include "classlm/common.hpp"
#include "classlm/criterion.hpp"
#include "classlm/exchange.hpp"
#include "classlm/text_corpus.hpp"

namespace classlm {

struct EvalReport {
  std::string model;
  double perplexity = 0.0;
  Count tokens = 0;  // scored positions
  Count oov = 0;     // excluded OOV positions (0 when OOV is scored)
  double oov_rate = 0.0;
  std::size_t adaptation_words = 0;
  /// "background" for models over the background-only vocabulary, "adaptation" otherwise.
  std::string vocabulary = "adaptation";

  bool operator==(const EvalReport&) const = default;
};

/// exp(-(1/N) sum ln p(w_i | c_i)) over scored positions. </s> is scored, <s> never is.
/// With score_oov false, OOV positions are skipped and counted, and the next position
/// sees <unk> as its context.
template <typename Model>
EvalReport perplexity(const Model& model, const Corpus& corpus, const Vocabulary& vocab, bool score_oov,
                      std::string name = "model") {
  EvalReport r;
  r.model = std::move(name);
  double log_sum = 0.0;
  auto score = [&](WordId ctx, WordId w) {
    const double p = model(ctx, w);
    if (!(p > 0.0) || !std::isfinite(p))
      throw ModelIntegrityError("model '" + r.model + "' gave p=" + detail::format_double(p) + " to '" +
                                vocab.word(w) + "' after '" + vocab.word(ctx) + "'");
    log_sum += std::log(p);
    ++r.tokens;
  };
  Count oov_positions = 0;
  for (const auto& s : corpus) {
    WordId ctx = Vocabulary::kBos;
    for (const auto& tok : s) {
      WordId w = vocab.lookup(tok);
      if (w == Vocabulary::kBos || w == Vocabulary::kEos) w = Vocabulary::kUnk;
      if (w == Vocabulary::kUnk) ++oov_positions;
      if (w == Vocabulary::kUnk && !score_oov) {
        ++r.oov;
      } else {
        score(ctx, w);
      }
      ctx = w;
    }
    score(ctx, Vocabulary::kEos);
  }
  r.perplexity = r.tokens > 0 ? std::exp(-log_sum / static_cast<double>(r.tokens)) : 0.0;
  // Denominator is every position that was or could have been scored, </s> included.
  const Count positions = r.tokens + r.oov;
  r.oov_rate = positions > 0 ? static_cast<double>(oov_positions) / static_cast<double>(positions) : 0.0;
  return r;
}

inline EvalReport perplexity(const BackoffModel& m, const Corpus& corpus, const Vocabulary& vocab, bool score_oov,
                             std::string name = "backoff") {
  require_vocabulary(vocab, m.header().vocab_checksum, "backoff model");
  return perplexity([&m](WordId v, WordId w) { return m.prob(v, w); }, corpus, vocab, score_oov, std::move(name));
}

inline EvalReport perplexity(const ClassModel& m, const Corpus& corpus, const Vocabulary& vocab, bool score_oov,
                             std::string name = "class") {
  require_vocabulary(vocab, m.header().vocab_checksum, "class model");
  return perplexity([&m](WordId v, WordId w) { return m.prob(v, w); }, corpus, vocab, score_oov, std::move(name));
}

/// 100 (baseline - treatment) / baseline.
inline double relative_improvement(double baseline, double treatment) {
  if (!(baseline > 0.0)) throw ConfigError("baseline must be positive");
  return 100.0 * (baseline - treatment) / baseline;
}

/// Rounds to `digits` significant figures, printed without exponent ("6130", "48.4").
inline std::string format_significant(double x, int digits = 3) {
  if (x == 0.0 || !std::isfinite(x)) return detail::format_double(x);
  const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(x))));
  const int decimals = std::max(0, digits - 1 - magnitude);
  const double scale = std::pow(10.0, digits - 1 - magnitude);
  const double rounded = std::round(x * scale) / scale;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, rounded);
  return buf;
}

// ---- experiment suite ----

enum class Method { back_bo, back_cl, adapt_bo, adapt_cl, fillup, clust_adapt };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::back_cl, Method::back_bo,    Method::adapt_bo,
                                     Method::adapt_cl, Method::fillup, Method::clust_adapt};
  return m;
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::back_bo: return "back_bo";
    case Method::back_cl: return "back_cl";
    case Method::adapt_bo: return "adapt_bo";
    case Method::adapt_cl: return "adapt_cl";
    case Method::fillup: return "fillup";
    case Method::clust_adapt: return "clust_adapt";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (method_name(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline bool uses_background_vocabulary(Method m) { return m == Method::back_bo || m == Method::back_cl; }

inline std::vector<std::size_t> default_adaptation_sizes() { return {200, 1000, 5000, 25000, 125000}; }

struct SuiteConfig {
  std::size_t vocab_size = 20000;
  ClusterId clusters = 500;
  Count cutoff = 1;
  std::optional<double> discount;  // forces one B everywhere when set
  ExchangeConfig exchange;
  std::vector<Method> methods = all_methods();
  bool score_oov = false;
};

struct SuiteResult {
  std::vector<std::size_t> sizes;
  std::vector<EvalReport> records;
  std::vector<std::string> warnings;
};

inline Discount discount_or(const std::optional<double>& forced, Discount estimated) {
  return forced ? Discount(*forced) : estimated;
}

inline CriterionDiscounts discount_or(const std::optional<double>& forced, const CriterionDiscounts& estimated) {
  return forced ? CriterionDiscounts(Discount(*forced)) : estimated;
}

/// Word-level Round(lambda N_A + (1 - lambda) N_B) over the union of observed bigrams.
inline CountTable combine_word_counts(const CountTable& a, const CountTable& b, double lambda) {
  if (a.vocab_size() != b.vocab_size() || a.vocab_checksum() != b.vocab_checksum())
    throw ConfigError("cannot combine count tables over different vocabularies");
  std::vector<BigramCount> out;
  auto ia = a.bigrams().begin(), ea = a.bigrams().end();
  auto ib = b.bigrams().begin(), eb = b.bigrams().end();
  auto less = [](const BigramCount& x, const BigramCount& y) {
    return x.context != y.context ? x.context < y.context : x.word < y.word;
  };
  while (ia != ea || ib != eb) {
    Count ca = 0, cb = 0;
    BigramCount key{};
    if (ib == eb || (ia != ea && less(*ia, *ib))) {
      key = *ia;
      ca = (ia++)->count;
    } else if (ia == ea || less(*ib, *ia)) {
      key = *ib;
      cb = (ib++)->count;
    } else {
      key = *ia;
      ca = (ia++)->count;
      cb = (ib++)->count;
    }
    const Count c = interpolate_round(ca, cb, lambda);
    if (c > 0) out.push_back({key.context, key.word, c});
  }
  return CountTable(a.vocab_size(), a.vocab_checksum(), std::move(out));
}

/// Standard-criterion clustering of `counts` from the frequency initialization.
inline ExchangeResult train_clustering(const CountTable& counts, const Vocabulary& vocab, ClusterId k,
                                       const ExchangeConfig& base, const std::optional<double>& forced_discount) {
  ExchangeConfig cfg = base;
  cfg.criterion = CriterionKind::standard;
  auto init = init_clustering(counts, vocab, k, k);
  return run_exchange(counts, nullptr, vocab, std::move(init), cfg,
                      discount_or(forced_discount, estimate_criterion_discounts(counts)));
}

/// Adaptive-criterion clustering starting from `init`. The criterion's discounts come from
/// the background count-of-counts unless forced.
inline ExchangeResult train_adaptive_clustering(const CountTable& adapt, const CountTable& back,
                                                const Vocabulary& vocab, ClusterMap init, const ExchangeConfig& base,
                                                const std::optional<double>& forced_discount) {
  ExchangeConfig cfg = base;
  cfg.criterion = CriterionKind::adaptive;
  return run_exchange(adapt, &back, vocab, std::move(init), cfg,
                      discount_or(forced_discount, estimate_criterion_discounts(back)));
}

inline ClassModel class_model_for(const CountTable& counts, const ClusterMap& cm,
                                  const std::optional<double>& forced_discount) {
  if (forced_discount) {
    Discount d(*forced_discount);
    return estimate_class_model(counts, cm, {d, d, d});
  }
  return estimate_class_model(counts, cm);
}

inline BackoffModel backoff_for(const CountTable& counts, Count cutoff, const std::optional<double>& forced_discount) {
  if (forced_discount) return train_backoff(counts, Discount(*forced_discount), cutoff, Discount(*forced_discount));
  return train_backoff(counts, estimate_bigram_discount(counts), cutoff);
}

/// Trains and evaluates each configured method, for each adaptation size.
inline SuiteResult experiment_suite(const Corpus& back_corpus, const Corpus& adapt_corpus, const Corpus& heldout,
                                    std::vector<std::size_t> sizes, const SuiteConfig& cfg) {
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] < sizes[i - 1]) throw ConfigError("adaptation sizes must be nondecreasing");
  auto wants = [&](Method m) { return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end(); };

  SuiteResult out;
  out.sizes = sizes;
  const std::size_t available = word_count(adapt_corpus);

  Vocabulary back_vocab;
  CountTable back_counts_bv;
  std::optional<ExchangeResult> back_clusters;
  if (wants(Method::back_bo) || wants(Method::back_cl) || wants(Method::clust_adapt)) {
    back_vocab = build_vocabulary({}, back_corpus, cfg.vocab_size);
    back_counts_bv = count_events(back_corpus, back_vocab);
  }
  if (wants(Method::back_cl) || wants(Method::clust_adapt))
    back_clusters = train_clustering(back_counts_bv, back_vocab, cfg.clusters, cfg.exchange, cfg.discount);

  auto record = [&](EvalReport r, Method m, std::size_t words) {
    r.model = method_name(m);
    r.adaptation_words = words;
    r.vocabulary = uses_background_vocabulary(m) ? "background" : "adaptation";
    out.records.push_back(std::move(r));
  };

  if (wants(Method::back_cl)) {
    auto model = class_model_for(back_counts_bv, back_clusters->clusters, cfg.discount);
    record(perplexity(model, heldout, back_vocab, cfg.score_oov), Method::back_cl, 0);
  }
  if (wants(Method::back_bo)) {
    auto model = backoff_for(back_counts_bv, cfg.cutoff, cfg.discount);
    record(perplexity(model, heldout, back_vocab, cfg.score_oov), Method::back_bo, 0);
  }

  for (std::size_t size : sizes) {
    if (!wants(Method::adapt_bo) && !wants(Method::adapt_cl) && !wants(Method::fillup) && !wants(Method::clust_adapt))
      break;
    if (size > available)
      out.warnings.push_back("adaptation size " + std::to_string(size) + " exceeds the " + std::to_string(available) +
                             "-word adaptation corpus; using all of it");
    const Corpus slice = truncate_corpus(adapt_corpus, size);
    const std::size_t used = word_count(slice);
    const Vocabulary vocab = build_vocabulary(slice, back_corpus, cfg.vocab_size);
    const CountTable adapt = count_events(slice, vocab);
    const CountTable back = count_events(back_corpus, vocab);

    if (wants(Method::adapt_bo)) {
      auto model = backoff_for(adapt, cfg.cutoff, cfg.discount);
      record(perplexity(model, heldout, vocab, cfg.score_oov), Method::adapt_bo, used);
    }
    if (wants(Method::adapt_cl)) {
      auto clusters = train_clustering(adapt, vocab, cfg.clusters, cfg.exchange, cfg.discount);
      auto model = class_model_for(adapt, clusters.clusters, cfg.discount);
      record(perplexity(model, heldout, vocab, cfg.score_oov), Method::adapt_cl, used);
    }
    if (wants(Method::fillup)) {
      auto background = backoff_for(back, cfg.cutoff, cfg.discount);
      auto model =
          fillup(adapt, background, discount_or(cfg.discount, estimate_bigram_discount(adapt)));
      record(perplexity(model, heldout, vocab, cfg.score_oov), Method::fillup, used);
    }
    if (wants(Method::clust_adapt)) {
      auto init = remap_clustering(back_clusters->clusters, back_vocab, vocab);
      auto clusters = train_adaptive_clustering(adapt, back, vocab, std::move(init), cfg.exchange, cfg.discount);
      auto combined = combine_word_counts(adapt, back, clusters.lambda);
      auto model = class_model_for(combined, clusters.clusters, cfg.discount);
      record(perplexity(model, heldout, vocab, cfg.score_oov), Method::clust_adapt, used);
    }
  }
  return out;
}

// ---- report output ----

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"model", r.model},       {"perplexity", r.perplexity},
          {"tokens", r.tokens},     {"oov", r.oov},
          {"oov_rate", r.oov_rate}, {"adaptation_words", r.adaptation_words},
          {"vocabulary", r.vocabulary}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.model = j.at("model").get<std::string>();
    r.perplexity = j.at("perplexity").get<double>();
    r.tokens = j.at("tokens").get<Count>();
    r.oov = j.at("oov").get<Count>();
    r.oov_rate = j.at("oov_rate").get<double>();
    r.adaptation_words = j.at("adaptation_words").get<std::size_t>();
    r.vocabulary = j.value("vocabulary", std::string("adaptation"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad evaluation record: ") + e.what());
  }
}

/// Machine-readable records: {"records": [...], "warnings": [...]}.
inline std::string records_json(const std::vector<EvalReport>& records, const std::vector<std::string>& warnings = {}) {
  nlohmann::json j;
  j["records"] = nlohmann::json::array();
  for (const auto& r : records) j["records"].push_back(to_json(r));
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

inline std::vector<EvalReport> parse_records(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad record file: ") + e.what());
  }
  std::vector<EvalReport> out;
  const auto& arr = j.is_array() ? j : j.at("records");
  for (const auto& r : arr) out.push_back(report_from_json(r));
  if (warnings && j.is_object() && j.contains("warnings"))
    for (const auto& w : j["warnings"]) warnings->push_back(w.get<std::string>());
  return out;
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t width, bool right = true) {
  if (s.size() >= width) return s;
  return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

inline std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

}  // namespace detail

/// Plain-text tables: background baselines, one table per adapted method (adaptation words,
/// PP, OOV %), then relative perplexity improvements between method pairs.
inline std::string render_report(const std::vector<EvalReport>& records, const std::vector<std::string>& warnings = {}) {
  std::ostringstream out;
  std::vector<const EvalReport*> baseline;
  std::map<std::string, std::vector<const EvalReport*>> adapted;
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (r.vocabulary == "background") {
      baseline.push_back(&r);
    } else {
      if (!adapted.count(r.model)) order.push_back(r.model);
      adapted[r.model].push_back(&r);
    }
  }
  // Table order: adapt_bo, adapt_cl, fillup, clust_adapt, then anything else.
  std::vector<std::string> canonical{"adapt_bo", "adapt_cl", "fillup", "clust_adapt"};
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    auto rank = [&](const std::string& m) {
      auto it = std::find(canonical.begin(), canonical.end(), m);
      return static_cast<std::size_t>(it - canonical.begin());
    };
    return rank(a) < rank(b);
  });

  for (const auto& w : warnings) out << "warning: " << w << "\n";
  if (!warnings.empty()) out << "\n";

  if (!baseline.empty()) {
    out << "Baseline models (no adaptation material)\n";
    out << "note: background-vocabulary perplexities are not directly comparable to the adapted models\n";
    out << detail::pad("Model", 12, false) << detail::pad("PP", 10) << detail::pad("OOV(%)", 10) << "\n";
    for (const auto* r : baseline)
      out << detail::pad(r->model, 12, false) << detail::pad(format_significant(r->perplexity), 10)
          << detail::pad(detail::percent(100.0 * r->oov_rate), 10) << "\n";
    out << "\n";
  }

  for (const auto& m : order) {
    out << "Results for " << m << "\n";
    out << detail::pad("Adapt. words", 14) << detail::pad("PP", 10) << detail::pad("OOV(%)", 10) << "\n";
    for (const auto* r : adapted[m])
      out << detail::pad(std::to_string(r->adaptation_words), 14) << detail::pad(format_significant(r->perplexity), 10)
          << detail::pad(detail::percent(100.0 * r->oov_rate), 10) << "\n";
    out << "\n";
  }

  const std::vector<std::pair<std::string, std::string>> pairs{
      {"adapt_bo", "adapt_cl"}, {"adapt_bo", "fillup"}, {"adapt_cl", "clust_adapt"}, {"fillup", "clust_adapt"}};
  std::vector<std::pair<std::string, std::string>> present;
  for (const auto& p : pairs)
    if (adapted.count(p.first) && adapted.count(p.second)) present.push_back(p);
  if (!present.empty()) {
    out << "Relative perplexity improvement (%) of treatment over baseline\n";
    out << detail::pad("Adapt. words", 14);
    for (const auto& [base, treat] : present) out << detail::pad(treat + " vs " + base, 26);
    out << "\n";
    std::vector<std::size_t> sizes;
    for (const auto* r : adapted[present[0].first]) sizes.push_back(r->adaptation_words);
    for (std::size_t words : sizes) {
      out << detail::pad(std::to_string(words), 14);
      for (const auto& [base, treat] : present) {
        auto find = [&](const std::string& m) -> const EvalReport* {
          for (const auto* r : adapted[m])
            if (r->adaptation_words == words) return r;
          return nullptr;
        };
        const auto* b = find(base);
        const auto* t = find(treat);
        out << detail::pad(b && t ? detail::percent(relative_improvement(b->perplexity, t->perplexity)) : "-", 26);
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace classlm
