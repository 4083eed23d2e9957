#pragma once

// Subcommands vocab / counts / train / adapt / eval / report. Each reads and writes the
// artifact formats of the owning modules; an error anywhere leaves no output file behind.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "classlm/backoff_bigram.hpp"
#include "classlm/class_bigram.hpp"
#include "classlm/common.hpp"
#include "classlm/evaluation.hpp"
#include "classlm/exchange.hpp"
#include "classlm/text_corpus.hpp"

namespace classlm {

struct RunConfig {
  std::string background, adaptation, heldout, out;
  std::string vocab, corpus, counts, background_counts, model, init, trace;
  std::vector<std::string> records;
  std::size_t vocab_size = 20000;
  ClusterId clusters = 500;
  Count cutoff = 1;
  std::string discount = "auto";
  std::string lambda_grid = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
  int max_iterations = 20;
  double threshold = 1e-6;
  std::vector<std::string> methods;
  std::vector<std::size_t> sizes = default_adaptation_sizes();
  bool score_oov = false;
  std::size_t adaptation_words = 0;
  std::string name;

  std::optional<double> discount_value() const {
    if (discount == "auto") return std::nullopt;
    double b = 0.0;
    try {
      b = detail::parse_double(discount);
    } catch (const FormatError&) {
      throw ConfigError("--discount must be 'auto' or a number, got '" + discount + "'");
    }
    Discount check(b);  // range check
    return b;
  }

  std::vector<double> grid() const {
    std::vector<double> g;
    std::stringstream ss(lambda_grid);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      try {
        g.push_back(detail::parse_double(item));
      } catch (const FormatError&) {
        throw ConfigError("bad --lambda-grid entry '" + item + "'");
      }
    }
    return g;
  }

  ExchangeConfig exchange(CriterionKind kind) const {
    ExchangeConfig c;
    c.max_iterations = max_iterations;
    c.threshold = threshold;
    c.criterion = kind;
    c.lambda_grid = grid();
    c.validate();
    return c;
  }

  std::vector<Method> method_set() const {
    std::vector<Method> m;
    for (const auto& s : methods) m.push_back(parse_method(s));
    return m;
  }

  void validate() const {
    if (vocab_size < 4) throw ConfigError("--vocab-size must be at least 4");
    if (clusters < 2) throw ConfigError("--clusters must be at least 2");
    if (cutoff < 0) throw ConfigError("--cutoff must be nonnegative");
    discount_value();
    method_set();
    if (!adaptation.empty() && !heldout.empty() &&
        std::filesystem::weakly_canonical(adaptation) == std::filesystem::weakly_canonical(heldout))
      throw ConfigError("adaptation and held-out corpora must be different files");
  }
};

namespace detail {

inline std::ifstream open_input(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing required ") + what);
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

inline Corpus load_corpus(const std::string& path, const char* what) {
  auto in = open_input(path, what);
  return read_corpus(in);
}

inline Vocabulary load_vocabulary(const std::string& path) {
  auto in = open_input(path, "--vocab");
  return read_vocabulary(in);
}

inline CountTable load_counts(const std::string& path, const Vocabulary& vocab, const char* what) {
  auto in = open_input(path, what);
  auto t = read_counts(in);
  require_vocabulary(vocab, t.vocab_checksum(), path);
  return t;
}

/// Writes to `path`, or to `fallback` when no path is given.
inline void emit(const std::string& path, const std::string& content, std::ostream& fallback) {
  if (path.empty()) {
    fallback << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

inline std::string require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("missing required --out");
  return cfg.out;
}

inline ExchangeObserver progress_log(std::ostream& log, std::ostream* trace) {
  ExchangeObserver ob;
  ob.on_iteration = [&log](const IterationRecord& r) {
    log << "iteration " << r.iteration << ": " << r.moves << " moves, score " << format_double(r.score)
        << ", lambda " << format_double(r.lambda) << '\n';
  };
  if (trace) ob.on_move = criterion_trace(*trace);
  return ob;
}

inline std::string kind_of_model_file(const std::string& path) {
  auto in = open_input(path, "--model");
  std::string line;
  std::getline(in, line);
  if (line.rfind("#backoff", 0) == 0) return "backoff";
  if (line.rfind("#class", 0) == 0) return "class";
  throw FormatError("'" + path + "' is neither a backoff nor a class model");
}

inline std::string dump_clusters(const ExchangeResult& r, const Vocabulary& vocab) {
  std::ostringstream s;
  write_clusters(s, r.clusters, vocab, {r.iterations, r.score, r.lambda});
  return s.str();
}

inline std::string dump_class_model(const ClassModel& m) {
  std::ostringstream s;
  write_class_model(s, m);
  return s.str();
}

inline std::string dump_backoff(const BackoffModel& m) {
  std::ostringstream s;
  write_backoff(s, m);
  return s.str();
}

}  // namespace detail

/// Vocabulary from --adaptation (optional) and --background, capped at --vocab-size.
inline int cmd_vocab(const RunConfig& cfg, std::ostream& out) {
  const Corpus back = detail::load_corpus(cfg.background, "--background");
  const Corpus adapt = cfg.adaptation.empty() ? Corpus{} : detail::load_corpus(cfg.adaptation, "--adaptation");
  std::ostringstream s;
  write_vocabulary(s, build_vocabulary(adapt, back, cfg.vocab_size));
  detail::emit(cfg.out, s.str(), out);
  return 0;
}

inline int cmd_counts(const RunConfig& cfg, std::ostream& out) {
  const Vocabulary vocab = detail::load_vocabulary(cfg.vocab);
  const Corpus corpus = detail::load_corpus(cfg.corpus, "--corpus");
  std::ostringstream s;
  write_counts(s, count_events(corpus, vocab));
  detail::emit(cfg.out, s.str(), out);
  return 0;
}

/// back_bo / adapt_bo train a backoff model; back_cl / adapt_cl run exchange clustering and
/// write the class model to --out and its clustering to --out + ".clusters".
inline int cmd_train(const RunConfig& cfg, std::ostream& log) {
  if (cfg.methods.size() != 1) throw ConfigError("train needs exactly one --method");
  const Method m = parse_method(cfg.methods[0]);
  const Vocabulary vocab = detail::load_vocabulary(cfg.vocab);
  const CountTable counts = detail::load_counts(cfg.counts, vocab, "--counts");
  const auto forced = cfg.discount_value();
  const std::string out = detail::require_out(cfg);
  switch (m) {
    case Method::back_bo:
    case Method::adapt_bo:
      detail::emit(out, detail::dump_backoff(backoff_for(counts, cfg.cutoff, forced)), log);
      return 0;
    case Method::back_cl:
    case Method::adapt_cl: {
      std::ofstream trace_file;
      if (!cfg.trace.empty()) trace_file.open(cfg.trace);
      auto result = run_exchange(counts, nullptr, vocab, init_clustering(counts, vocab, cfg.clusters, cfg.clusters),
                                 cfg.exchange(CriterionKind::standard),
                                 discount_or(forced, estimate_criterion_discounts(counts)),
                                 detail::progress_log(log, cfg.trace.empty() ? nullptr : &trace_file));
      log << "stopped after " << result.iterations << " iterations (" << result.stop_reason << ")\n";
      const auto model = class_model_for(counts, result.clusters, forced);
      detail::emit(out, detail::dump_class_model(model), log);
      detail::emit(out + ".clusters", detail::dump_clusters(result, vocab), log);
      return 0;
    }
    default:
      throw ConfigError("method '" + cfg.methods[0] + "' is an adaptation method; use the adapt subcommand");
  }
}

/// fillup: --counts (adaptation) on top of the background backoff --model.
/// clust_adapt: --counts (adaptation), --background-counts, and --init, a cluster file from
/// a back_cl run, which is remapped onto this vocabulary by spelling.
inline int cmd_adapt(const RunConfig& cfg, std::ostream& log) {
  if (cfg.methods.size() != 1) throw ConfigError("adapt needs exactly one --method");
  const Method m = parse_method(cfg.methods[0]);
  const Vocabulary vocab = detail::load_vocabulary(cfg.vocab);
  const CountTable adapt = detail::load_counts(cfg.counts, vocab, "--counts");
  const auto forced = cfg.discount_value();
  const std::string out = detail::require_out(cfg);
  if (m == Method::fillup) {
    auto in = detail::open_input(cfg.model, "--model");
    const BackoffModel background = read_backoff(in);
    require_vocabulary(vocab, background.header().vocab_checksum, cfg.model);
    const auto model = fillup(adapt, background, discount_or(forced, estimate_bigram_discount(adapt)));
    detail::emit(out, detail::dump_backoff(model), log);
    return 0;
  }
  if (m == Method::clust_adapt) {
    const CountTable back = detail::load_counts(cfg.background_counts, vocab, "--background-counts");
    auto in = detail::open_input(cfg.init, "--init");
    ClusterFile init = read_clusters(in);
    if (init.clusters.regular_states() != init.clusters.regular_categories())
      throw FormatError("initial clustering must have as many states as categories");
    std::ofstream trace_file;
    if (!cfg.trace.empty()) trace_file.open(cfg.trace);
    ExchangeConfig ecfg = cfg.exchange(CriterionKind::adaptive);
    auto result = run_exchange(adapt, &back, vocab, remap_clustering(init.clusters, init.vocab, vocab), ecfg,
                               discount_or(forced, estimate_criterion_discounts(back)),
                               detail::progress_log(log, cfg.trace.empty() ? nullptr : &trace_file));
    log << "stopped after " << result.iterations << " iterations (" << result.stop_reason << "), lambda "
        << detail::format_double(result.lambda) << '\n';
    const auto model = class_model_for(combine_word_counts(adapt, back, result.lambda), result.clusters, forced);
    detail::emit(out, detail::dump_class_model(model), log);
    detail::emit(out + ".clusters", detail::dump_clusters(result, vocab), log);
    return 0;
  }
  throw ConfigError("method '" + cfg.methods[0] + "' is not an adaptation method; use the train subcommand");
}

/// Perplexity of --model on --heldout. Prints a one-line summary; --out receives the record as JSON.
inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const Vocabulary vocab = detail::load_vocabulary(cfg.vocab);
  const std::string kind = detail::kind_of_model_file(cfg.model);
  const Corpus heldout = detail::load_corpus(cfg.heldout, "--heldout");
  const std::string name = !cfg.name.empty() ? cfg.name
                         : cfg.methods.size() == 1 ? cfg.methods[0]
                                                   : std::filesystem::path(cfg.model).stem().string();
  EvalReport r;
  auto in = detail::open_input(cfg.model, "--model");
  if (kind == "backoff")
    r = perplexity(read_backoff(in), heldout, vocab, cfg.score_oov, name);
  else
    r = perplexity(read_class_model(in), heldout, vocab, cfg.score_oov, name);
  r.adaptation_words = cfg.adaptation_words;
  if (name.rfind("back_", 0) == 0) r.vocabulary = "background";
  if (!cfg.out.empty()) detail::emit(cfg.out, records_json({r}), out);
  out << r.model << " PP " << format_significant(r.perplexity) << " tokens " << r.tokens << " oov " << r.oov
      << " oov_rate " << detail::percent(100.0 * r.oov_rate) << "%\n";
  return 0;
}

/// With --records: tables from previously written eval records. Otherwise runs the whole
/// suite over --background, --adaptation and --heldout for each of --sizes. --out receives
/// the text report and --out + ".json" the records.
inline int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  std::vector<EvalReport> records;
  std::vector<std::string> warnings;
  if (!cfg.records.empty()) {
    for (const auto& path : cfg.records) {
      auto in = detail::open_input(path, "--records");
      std::stringstream ss;
      ss << in.rdbuf();
      auto rs = parse_records(ss.str(), &warnings);
      records.insert(records.end(), rs.begin(), rs.end());
    }
    if (!cfg.methods.empty()) {
      std::vector<EvalReport> kept;
      for (auto& r : records)
        if (std::find(cfg.methods.begin(), cfg.methods.end(), r.model) != cfg.methods.end()) kept.push_back(r);
      records = std::move(kept);
    }
  } else {
    const Corpus back = detail::load_corpus(cfg.background, "--background");
    const Corpus adapt = detail::load_corpus(cfg.adaptation, "--adaptation");
    const Corpus heldout = detail::load_corpus(cfg.heldout, "--heldout");
    SuiteConfig scfg;
    scfg.vocab_size = cfg.vocab_size;
    scfg.clusters = cfg.clusters;
    scfg.cutoff = cfg.cutoff;
    scfg.discount = cfg.discount_value();
    scfg.exchange = cfg.exchange(CriterionKind::standard);
    if (!cfg.methods.empty()) scfg.methods = cfg.method_set();
    scfg.score_oov = cfg.score_oov;
    auto result = experiment_suite(back, adapt, heldout, cfg.sizes, scfg);
    records = std::move(result.records);
    warnings = std::move(result.warnings);
  }
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  const std::string text = render_report(records, warnings);
  detail::emit(cfg.out, text, out);
  if (!cfg.out.empty()) detail::emit(cfg.out + ".json", records_json(records, warnings), out);
  return 0;
}

/// Parses argv and dispatches. Returns the process exit status; diagnostics go to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"class-based bigram language models with exchange clustering and adaptation", "classlm"};
  app.require_subcommand(1);

  auto opt_vocab_size = [&](CLI::App* s) {
    s->add_option("--vocab-size", cfg.vocab_size, "maximum vocabulary size, reserved tokens included")
        ->capture_default_str();
  };
  auto opt_model_params = [&](CLI::App* s) {
    s->add_option("--clusters", cfg.clusters, "clusters per side")->capture_default_str();
    s->add_option("--cutoff", cfg.cutoff, "bigrams seen this often or less are not stored explicitly")
        ->capture_default_str();
    s->add_option("--discount", cfg.discount, "absolute discount B, or auto")->capture_default_str();
    s->add_option("--lambda-grid", cfg.lambda_grid, "comma-separated lambda values")->capture_default_str();
    s->add_option("--max-iterations", cfg.max_iterations, "exchange iteration limit")->capture_default_str();
    s->add_option("--threshold", cfg.threshold, "relative improvement that ends the exchange")
        ->capture_default_str();
  };
  // One file can configure every subcommand: options go under a [vocab], [train], ... section.
  app.set_config("--config", "", "configuration file with one section per subcommand");
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);

  auto* vocab = app.add_subcommand("vocab", "build a vocabulary");
  vocab->add_option("--background", cfg.background, "background corpus")->required();
  vocab->add_option("--adaptation", cfg.adaptation, "adaptation corpus");
  opt_vocab_size(vocab);
  vocab->add_option("--out", cfg.out, "output file (default stdout)");

  auto* counts = app.add_subcommand("counts", "count bigram events");
  counts->add_option("--vocab", cfg.vocab)->required();
  counts->add_option("--corpus", cfg.corpus)->required();
  counts->add_option("--out", cfg.out, "output file (default stdout)");

  auto* train = app.add_subcommand("train", "train back_bo, adapt_bo, back_cl or adapt_cl");
  train->add_option("--method", cfg.methods)->required();
  train->add_option("--vocab", cfg.vocab)->required();
  train->add_option("--counts", cfg.counts)->required();
  train->add_option("--trace", cfg.trace, "write every applied exchange move here");
  train->add_option("--out", cfg.out)->required();
  opt_model_params(train);

  auto* adapt = app.add_subcommand("adapt", "adapt with fillup or clust_adapt");
  adapt->add_option("--method", cfg.methods)->required();
  adapt->add_option("--vocab", cfg.vocab)->required();
  adapt->add_option("--counts", cfg.counts, "adaptation counts")->required();
  adapt->add_option("--model", cfg.model, "background backoff model (fillup)");
  adapt->add_option("--background-counts", cfg.background_counts, "background counts (clust_adapt)");
  adapt->add_option("--init", cfg.init, "back_cl cluster file (clust_adapt)");
  adapt->add_option("--trace", cfg.trace);
  adapt->add_option("--out", cfg.out)->required();
  opt_model_params(adapt);

  auto* eval = app.add_subcommand("eval", "held-out perplexity");
  eval->add_option("--model", cfg.model)->required();
  eval->add_option("--vocab", cfg.vocab)->required();
  eval->add_option("--heldout", cfg.heldout)->required();
  eval->add_option("--method", cfg.methods, "name to report the model under");
  eval->add_option("--name", cfg.name);
  eval->add_option("--adaptation-words", cfg.adaptation_words);
  eval->add_flag("--score-oov", cfg.score_oov, "score <unk> positions instead of skipping them");
  eval->add_option("--out", cfg.out, "JSON record file");

  auto* report = app.add_subcommand("report", "run the experiment suite, or tabulate eval records");
  report->add_option("--records", cfg.records, "eval record files");
  report->add_option("--background", cfg.background);
  report->add_option("--adaptation", cfg.adaptation);
  report->add_option("--heldout", cfg.heldout);
  report->add_option("--sizes", cfg.sizes, "adaptation sizes in words")->capture_default_str();
  report->add_option("--method", cfg.methods, "methods to include (default all)");
  report->add_flag("--score-oov", cfg.score_oov);
  report->add_option("--out", cfg.out, "report file; records go to <out>.json");
  opt_vocab_size(report);
  opt_model_params(report);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help());
      return 0;
    }
    err << "classlm: " << e.what() << '\n';
    return 2;
  }

  try {
    cfg.validate();
    if (vocab->parsed()) return cmd_vocab(cfg, out);
    if (counts->parsed()) return cmd_counts(cfg, out);
    if (train->parsed()) return cmd_train(cfg, err);
    if (adapt->parsed()) return cmd_adapt(cfg, err);
    if (eval->parsed()) return cmd_eval(cfg, out);
    if (report->parsed()) return cmd_report(cfg, out, err);
  } catch (const std::exception& e) {
    err << "classlm: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace classlm
