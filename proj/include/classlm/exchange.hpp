#pragma once

// Greedy exchange clustering: every word in turn goes to the cluster with the biggest
// criterion improvement, first on the category side, then on the state side. The adaptive
// variant re-chooses its global lambda after every iteration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "classlm/class_bigram.hpp"
#include "classlm/common.hpp"
#include "classlm/criterion.hpp"
#include "classlm/discounting.hpp"
#include "classlm/text_corpus.hpp"

namespace classlm {

inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

struct ExchangeConfig {
  int max_iterations = 20;
  /// Stop once an iteration improves the score by less than this fraction of |score|.
  double threshold = 1e-6;
  CriterionKind criterion = CriterionKind::standard;
  std::vector<double> lambda_grid = default_lambda_grid();

  void validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (!(threshold >= 0.0)) throw ConfigError("threshold must be nonnegative");
    if (criterion == CriterionKind::adaptive) {
      if (lambda_grid.empty()) throw ConfigError("adaptive clustering needs a nonempty lambda grid");
      for (double l : lambda_grid)
        if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda grid values must lie in [0,1]");
    }
  }
};

struct LambdaChoice {
  double lambda = 1.0;
  double score = kDegenerate;
  bool degenerate = false;
};

/// Argmax of F_adapt over the grid; ties go to the larger lambda. If every grid point is
/// degenerate, lambda = 1 is returned with `degenerate` set.
inline LambdaChoice optimize_lambda(const ClassCountTable& a, const ClassCountTable& b, std::vector<double> grid,
                                    const CriterionDiscounts& discount) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  std::sort(grid.begin(), grid.end());
  LambdaChoice best;
  bool found = false;
  for (double l : grid) {
    const double f = criterion_F_adapt(combine_counts(a, b, l), discount);
    if (f == kDegenerate) continue;
    if (!found || f >= best.score) {
      best = {l, f, false};
      found = true;
    }
  }
  if (!found) return {1.0, kDegenerate, true};
  return best;
}

struct MoveRecord {
  int iteration;
  WordId element;
  Side side;
  ClusterId from;
  ClusterId to;
  double delta;
  double total;
};

struct IterationRecord {
  int iteration;
  std::size_t moves;
  double score_before_lambda;  // after the sweeps, under the lambda the sweeps used
  double score;                // after any lambda update
  double lambda;
};

struct ExchangeObserver {
  std::function<void(const MoveRecord&)> on_move;
  std::function<void(const IterationRecord&)> on_iteration;
};

struct ExchangeResult {
  ClusterMap clusters;
  double score = 0.0;
  double lambda = 1.0;
  double initial_score = 0.0;
  int iterations = 0;
  std::string stop_reason;
  std::vector<IterationRecord> trajectory;
};

namespace detail {

// Moves must beat numerical noise in the running score to count as improvements.
inline bool is_improvement(double delta, double score) {
  if (std::isnan(delta)) return false;
  const double scale = std::isfinite(score) ? std::max(1.0, std::abs(score)) : 1.0;
  return delta > 1e-12 * scale;
}

}  // namespace detail

/// Greedy exchange. Words are visited by descending adaptation frequency (background
/// frequency, then spelling, break ties). For the adaptive criterion `back_counts` is
/// required; lambda is chosen from the grid before the first sweep and after every iteration.
inline ExchangeResult run_exchange(const CountTable& adapt_counts, const CountTable* back_counts,
                                   const Vocabulary& vocab, ClusterMap init, const ExchangeConfig& cfg,
                                   const CriterionDiscounts& discount, const ExchangeObserver& observer = {}) {
  cfg.validate();
  const bool adaptive = cfg.criterion == CriterionKind::adaptive;
  if (adaptive && !back_counts) throw ConfigError("adaptive clustering requires background counts");
  if (adapt_counts.vocab_size() != vocab.size() || init.vocab_size() != vocab.size())
    throw ConfigError("counts, clustering and vocabulary disagree in size");

  std::optional<CriterionState> state;
  if (adaptive) {
    state.emplace(adapt_counts, *back_counts, std::move(init), discount, 1.0);
    auto choice = optimize_lambda(state->adapt_table(), state->back_table(), cfg.lambda_grid, discount);
    state->set_lambda(choice.lambda);
  } else {
    state.emplace(adapt_counts, std::move(init), discount);
  }

  std::vector<WordId> order(vocab.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<WordId>(i);
  std::sort(order.begin(), order.end(), [&](WordId x, WordId y) {
    const Count ax = adapt_counts.unigram(x), ay = adapt_counts.unigram(y);
    if (ax != ay) return ax > ay;
    if (back_counts) {
      const Count bx = back_counts->unigram(x), by = back_counts->unigram(y);
      if (bx != by) return bx > by;
    }
    return vocab.word(x) < vocab.word(y);
  });

  ExchangeResult result;
  result.initial_score = state->score();
  double previous = state->score();
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    std::size_t moves = 0;
    for (Side side : {Side::category, Side::state}) {
      for (WordId w : order) {
        if (ClusterMap::frozen(w, side)) continue;
        const auto deltas = state->candidate_deltas(w, side);
        const ClusterId from = state->clusters().cluster_of(w, side);
        ClusterId best = -1;
        double best_delta = 0.0;
        for (ClusterId t = 0; t < static_cast<ClusterId>(deltas.size()); ++t) {
          if (t == from) continue;
          if (best < 0 || deltas[t] > best_delta) {
            best = t;
            best_delta = deltas[t];
          }
        }
        if (best < 0 || !detail::is_improvement(best_delta, state->score())) continue;
        const double applied = state->apply(w, side, best);
        ++moves;
        if (observer.on_move) observer.on_move({it, w, side, from, best, applied, state->score()});
      }
    }
    state->resync();
    IterationRecord rec{it, moves, state->score(), state->score(), state->lambda()};
    if (adaptive) {
      auto choice = optimize_lambda(state->adapt_table(), state->back_table(), cfg.lambda_grid, discount);
      if (choice.lambda != state->lambda()) state->set_lambda(choice.lambda);
      rec.score = state->score();
      rec.lambda = state->lambda();
    }
    result.trajectory.push_back(rec);
    result.iterations = it;
    if (observer.on_iteration) observer.on_iteration(rec);

    const double current = state->score();
    if (moves == 0) {
      result.stop_reason = "no moves";
      break;
    }
    if (std::isfinite(previous) && std::isfinite(current) &&
        (current - previous) < cfg.threshold * std::max(1.0, std::abs(previous))) {
      result.stop_reason = "relative improvement below threshold";
      break;
    }
    if (it == cfg.max_iterations) result.stop_reason = "iteration limit";
    previous = current;
  }
  result.score = state->score();
  result.lambda = state->lambda();
  result.clusters = state->clusters();
  return result;
}

/// Writes one line per applied move: `iter element side from to delta F_total`.
inline std::function<void(const MoveRecord&)> criterion_trace(std::ostream& out) {
  return [&out](const MoveRecord& m) {
    out << m.iteration << ' ' << m.element << ' ' << side_name(m.side) << ' ' << m.from << ' ' << m.to << ' '
        << detail::format_double(m.delta) << ' ' << detail::format_double(m.total) << '\n';
  };
}

}  // namespace classlm
