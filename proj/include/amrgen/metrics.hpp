#pragma once

// Generation and parse metrics: corpus BLEU over tokenised text, and span F1
// between predicted and reference constituency trees.  Because the two trees
// need not share a terminal count, spans are compared through a monotone
// insert/delete alignment of the POS sequences first.

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "amrgen/tree.hpp"

namespace amrgen {

class MetricsError : public std::runtime_error {
 public:
  explicit MetricsError(const std::string& what) : std::runtime_error(what) {}
};

using TokenSeq = std::vector<std::string>;

// Corpus-level BLEU-4 with brevity penalty, in [0, 100].  Modified n-gram
// precisions are pooled over the corpus; orders with no candidate n-grams at
// all (corpus shorter than n) are left out of the geometric mean, any other
// zero precision gives 0 (no smoothing).  One reference per hypothesis.
double corpus_bleu(const std::vector<TokenSeq>& hypotheses,
                   const std::vector<TokenSeq>& references);

// Monotone matching between two POS sequences from the minimum insert/delete
// edit script (equivalently longest common subsequence, earliest match on
// ties).  Unmatched positions map to -1.
struct Alignment {
  std::vector<std::pair<int, int>> matches;  // (pred pos, ref pos), increasing
  std::vector<int> pred_to_ref;
  std::vector<int> ref_to_pred;
  int edits = 0;  // inserts + deletes = |pred| + |ref| - 2 * |matches|
};

Alignment align_terminals(const TokenSeq& pred, const TokenSeq& ref);

// Half-open interval over terminal positions plus the nonterminal label.
struct Span {
  int start = 0;
  int end = 0;
  std::string label;
  auto operator<=>(const Span&) const = default;
};

// Spans of every internal node of a delexicalised tree, including the root.
// Width-1 spans carry no bracketing decision and are excluded unless asked
// for (the conventional choice; configurable because conventions differ).
std::vector<Span> tree_spans(const ConstituencyTree& t,
                             bool include_width1 = false);

TokenSeq tree_terminals(const ConstituencyTree& t);

struct SpanMatchCounts {
  long long matched = 0;
  long long n_pred = 0;
  long long n_ref = 0;
};

// A predicted span matches a reference span when the terminal alignment is a
// bijection between their intervals (spans touching unaligned terminals on
// either side therefore never match) and, if `labelled`, the labels agree.
// Matching is with multiplicity, so unary chains need matching partners.
SpanMatchCounts span_match_counts(const ConstituencyTree& pred,
                                  const ConstituencyTree& ref, bool labelled,
                                  bool include_width1 = false);

struct PrfScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Fractions in [0, 1].  Empty-vs-empty span sets count as a perfect match.
PrfScore span_f1(const ConstituencyTree& pred, const ConstituencyTree& ref,
                 bool labelled, bool include_width1 = false);

// Corpus-level micro-averaged report, in percent.
struct ParseEvalReport {
  double labelled_precision = 0;
  double labelled_recall = 0;
  double labelled_f1 = 0;
  double unlabelled_precision = 0;
  double unlabelled_recall = 0;
  double unlabelled_f1 = 0;
  int n_examples = 0;
};

// Predictions and references are paired by position; ids must agree pairwise.
ParseEvalReport evaluate_parse_task(
    const std::vector<std::pair<std::string, ConstituencyTree>>& pred,
    const std::vector<std::pair<std::string, ConstituencyTree>>& ref);

}  // namespace amrgen
