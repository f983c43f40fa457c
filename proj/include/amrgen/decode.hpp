#pragma once

// Inference over trained models: constrained beam search for parses and
// words, the n-best parse / best-realisation heuristic for final outputs,
// oracle-parse realisation and temperature sampling.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "amrgen/model.hpp"

namespace amrgen {

// ---------------------------------------------------------------------------
// Generic beam search.  The process is described by an expansion callback:
// all scoreable continuations of a state, each carrying its own successor
// state and whether choosing it finishes the hypothesis.

template <class State>
struct Successor {
  int token = -1;
  double logp = 0;
  bool finishes = false;
  State state;
};

template <class State>
struct BeamHyp {
  std::vector<int> tokens;
  double score = 0;  // sum of chosen-token log-probabilities
  bool finished = false;
  State state;
};

struct BeamConfig {
  int width = 2;
  int n_best = 1;
  int max_steps = 0;  // must be set by the caller
  bool length_normalize = false;  // final ranking only, off by default
};

// Finished hypotheses leave the active beam for a k-best list; after the
// step limit (or once nothing is active) the top n are returned, padded
// with the best unfinished beam items when fewer than n finished.
template <class State>
std::vector<BeamHyp<State>> beam_search(
    const State& init,
    const std::function<std::vector<Successor<State>>(const State&)>& expand,
    const BeamConfig& cfg) {
  if (cfg.max_steps <= 0)
    throw ConfigError("beam search: max_steps must be positive");
  if (cfg.width < 1 || cfg.n_best < 1)
    throw ConfigError("beam search: width and n_best must be at least 1");

  std::vector<BeamHyp<State>> active;
  active.push_back(BeamHyp<State>{{}, 0, false, init});
  std::vector<BeamHyp<State>> kbest;

  for (int step = 0; step < cfg.max_steps && !active.empty(); ++step) {
    std::vector<BeamHyp<State>> cands;
    for (const auto& h : active) {
      for (auto& s : expand(h.state)) {
        BeamHyp<State> nh;
        nh.tokens = h.tokens;
        nh.tokens.push_back(s.token);
        nh.score = h.score + s.logp;
        nh.finished = s.finishes;
        nh.state = std::move(s.state);
        cands.push_back(std::move(nh));
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const BeamHyp<State>& a, const BeamHyp<State>& b) {
                       return a.score > b.score;
                     });
    active.clear();
    int taken = 0;
    for (auto& c : cands) {
      if (taken == cfg.width) break;
      ++taken;
      if (c.finished)
        kbest.push_back(std::move(c));
      else
        active.push_back(std::move(c));
    }
  }

  // Wider beams always carry the width-1 rollout, so the reported best can
  // never fall below the greedy result even when pruning drops its prefix.
  if (cfg.width > 1) {
    BeamConfig gc;
    gc.width = 1;
    gc.n_best = 1;
    gc.max_steps = cfg.max_steps;
    auto greedy = beam_search<State>(init, expand, gc);
    if (!greedy.empty() && greedy.front().finished) {
      bool dup = false;
      for (const auto& h : kbest) dup = dup || h.tokens == greedy.front().tokens;
      if (!dup) kbest.push_back(std::move(greedy.front()));
    }
  }

  auto rank = [&](const BeamHyp<State>& h) {
    return cfg.length_normalize && !h.tokens.empty()
               ? h.score / double(h.tokens.size())
               : h.score;
  };
  std::stable_sort(kbest.begin(), kbest.end(),
                   [&](const BeamHyp<State>& a, const BeamHyp<State>& b) {
                     return rank(a) > rank(b);
                   });
  for (auto& a : active) {
    if (int(kbest.size()) >= cfg.n_best) break;
    kbest.push_back(std::move(a));  // pad with the best unfinished items
  }
  if (int(kbest.size()) > cfg.n_best) kbest.resize(std::size_t(cfg.n_best));
  return kbest;
}

// ---------------------------------------------------------------------------
// Model decoding.

struct DecodeConfig {
  int beam_width = 2;
  int n_parses = 2;
  int max_syntax_steps = 512;  // raised internally to the automaton bound
  int max_word_steps = 256;
  Real temperature = 0.3;
  int num_samples = 3;
  bool length_normalize = false;
};

// Syntax-side step budget that guarantees every hypothesis can close.
int syntax_step_budget(int requested);

struct ParsePrediction {
  ActionSequence actions;
  double score = 0;      // sum log P(action)
  bool finished = true;  // false only when padded from the beam
};

// n-best constrained parse decoding for any task with a syntax stage.
std::vector<ParsePrediction> predict_parses(const Seq2SeqModel& model,
                                            const Example& ex,
                                            const DecodeConfig& cfg, int n);

struct RealisationCandidate {
  ActionSequence parse;                    // empty for the syntax-free baseline
  std::vector<std::string> parse_tokens;   // action tokens, for output
  std::vector<std::string> text;           // deanonymized surface tokens
  std::vector<int> word_ids;               // extended-vocab ids, EOS included
  double syn_score = 0;
  double lex_score = 0;
  double joint_score() const { return syn_score + lex_score; }
};

struct GenerateResult {
  std::vector<RealisationCandidate> candidates;  // joint score descending
  const RealisationCandidate& best() const { return candidates.front(); }
};

// Joint checkpoints: n-best parses, one width-`beam_width` realisation per
// parse, final ranking by syntax + lexicalisation log-probability.  Baseline
// checkpoints decode words directly.
GenerateResult generate(const Seq2SeqModel& model, const Example& ex,
                        const DecodeConfig& cfg);

// Width-`beam_width` realisation conditioned on the example's gold parse.
std::vector<std::string> generate_with_oracle_parse(const Seq2SeqModel& model,
                                                    const Example& ex,
                                                    const DecodeConfig& cfg,
                                                    double* lex_score = nullptr);

struct DiverseSample {
  ActionSequence parse;
  std::vector<std::string> text;
};

struct SampleResult {
  std::vector<DiverseSample> samples;
  int duplicates = 0;  // samples sharing an earlier sample's parse
};

// Temperature-sampled parses (restricted to permissible actions), each
// realised deterministically.  Duplicates are kept and counted.
SampleResult sample_diverse(const Seq2SeqModel& model, const Example& ex,
                            const DecodeConfig& cfg, Rng& rng);

// Direct temperature sampling of surface tokens from a baseline checkpoint.
std::vector<std::vector<std::string>> sample_baseline(const Seq2SeqModel& model,
                                                      const Example& ex,
                                                      const DecodeConfig& cfg,
                                                      Rng& rng);

// Draws an index from dist (a column of probabilities) after raising it to
// the power 1/temperature and renormalizing; entries that are exactly zero
// stay excluded.  Equivalent to dividing the pre-softmax logits by the
// temperature.
Eigen::Index sample_index(const Mat& dist, Real temperature, Rng& rng);

}  // namespace amrgen
