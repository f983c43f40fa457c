#include "amrgen/decode.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "amrgen/penman.hpp"

namespace amrgen {
namespace {

struct SynState {
  DecState st;
  int last = kBosId;
  ActionAutomaton autom;
};

struct WordState {
  DecState st;
  Eigen::Index last = kBosId;
};

ActionSequence actions_from_ids(const Vocab& av, const std::vector<int>& ids) {
  ActionSequence seq;
  seq.reserve(ids.size());
  for (int id : ids) seq.push_back(action_from_token(av.token(id)));
  return seq;
}

std::vector<std::string> action_tokens(const ActionSequence& seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (const Action& a : seq) out.push_back(action_token(a));
  return out;
}

// Beam search over the syntax decoder; token ids live in the action vocab.
std::vector<BeamHyp<SynState>> syntax_beam(const Seq2SeqModel& model, Tape& t,
                                           const Encoded& enc,
                                           const DecodeConfig& cfg, int n) {
  DropoutCtx off = model.decoder_dropout(nullptr);
  SynState init{model.init_syntax_state(t, enc), kBosId, ActionAutomaton{}};
  auto expand = [&](const SynState& s) {
    std::vector<Successor<SynState>> out;
    StepOut so =
        model.syntax_step(t, enc, s.st, s.last, s.autom.permissible(), off);
    const Mat& d = t.value(so.dist);
    for (Eigen::Index id = 0; id < d.rows(); ++id) {
      Real p = d(id, 0);
      if (p <= Real(0)) continue;
      Successor<SynState> nx;
      nx.token = int(id);
      nx.logp = std::log(double(p));
      nx.state = SynState{so.state, int(id), s.autom};
      nx.state.autom.apply(
          action_from_token(model.vocabs().action.token(int(id))));
      nx.finishes = nx.state.autom.finished();
      out.push_back(std::move(nx));
    }
    return out;
  };
  BeamConfig bc;
  bc.width = cfg.beam_width;
  bc.n_best = n;
  bc.max_steps = syntax_step_budget(cfg.max_syntax_steps);
  bc.length_normalize = cfg.length_normalize;
  return beam_search<SynState>(init, expand, bc);
}

// Best realisation of an attached parse (or of the bare source for the
// baseline task).  Returns extended-vocab ids without the final EOS.
BeamHyp<WordState> word_beam_best(const Seq2SeqModel& model, Tape& t,
                                  const Encoded& enc, const DecodeConfig& cfg) {
  DropoutCtx off = model.decoder_dropout(nullptr);
  WordState init{model.init_lex_state(t, enc), kBosId};
  auto expand = [&](const WordState& s) {
    std::vector<Successor<WordState>> out;
    StepOut so = model.lex_step(t, enc, s.st, s.last, off);
    const Mat& d = t.value(so.dist);
    for (Eigen::Index id = 0; id < d.rows(); ++id) {
      if (id == kPadId || id == kBosId) continue;
      Real p = d(id, 0);
      if (p <= Real(0)) continue;
      Successor<WordState> nx;
      nx.token = int(id);
      nx.logp = std::log(double(p));
      nx.finishes = id == kEosId;
      nx.state = WordState{so.state, id};
      out.push_back(std::move(nx));
    }
    return out;
  };
  BeamConfig bc;
  bc.width = cfg.beam_width;
  bc.n_best = 1;
  bc.max_steps = cfg.max_word_steps;
  bc.length_normalize = cfg.length_normalize;
  auto hyps = beam_search<WordState>(init, expand, bc);
  if (hyps.empty()) throw ModelError("word beam returned no hypotheses");
  return hyps.front();
}

std::vector<std::string> surface_text(const Seq2SeqModel& model,
                                      const Encoded& enc,
                                      const std::vector<int>& ids,
                                      const std::map<std::string, std::string>&
                                          anon_table) {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int id : ids) {
    if (id == kEosId) break;
    toks.push_back(model.output_token(enc, id));
  }
  return deanonymize(toks, anon_table).tokens;
}

}  // namespace

int syntax_step_budget(int requested) {
  // Past kMaxActions the automaton admits only closure moves, so any
  // hypothesis finishes within this many steps; a smaller cap could strand
  // well-formed prefixes.
  int bound = kMaxActions + 2 * kMaxOpenDepth + 1;
  return std::max(requested, bound);
}

std::vector<ParsePrediction> predict_parses(const Seq2SeqModel& model,
                                            const Example& ex,
                                            const DecodeConfig& cfg, int n) {
  if (!model.has_syntax_stage())
    throw ModelError("task " + task_name(model.config().task) +
                     " has no syntax stage to decode");
  Tape t;
  DropoutCtx off = model.encoder_dropout(nullptr);
  IndexedExample ix = index_example(ex, model.vocabs());
  Encoded enc = model.encode_source(t, ix, off);
  auto hyps = syntax_beam(model, t, enc, cfg, n);
  std::vector<ParsePrediction> out;
  out.reserve(hyps.size());
  for (const auto& h : hyps) {
    ParsePrediction p;
    p.actions = actions_from_ids(model.vocabs().action, h.tokens);
    p.score = h.score;
    p.finished = h.finished;
    out.push_back(std::move(p));
  }
  return out;
}

GenerateResult generate(const Seq2SeqModel& model, const Example& ex,
                        const DecodeConfig& cfg) {
  if (cfg.beam_width < 1 || cfg.n_parses < 1)
    throw ConfigError("generate: beam width and n_parses must be at least 1");
  const Task task = model.config().task;
  GenerateResult res;
  Tape t;
  DropoutCtx off = model.encoder_dropout(nullptr);
  IndexedExample ix = index_example(ex, model.vocabs());

  if (task == Task::kBaselineS2sCopy) {
    Encoded enc = model.encode_source(t, ix, off);
    BeamHyp<WordState> best = word_beam_best(model, t, enc, cfg);
    RealisationCandidate c;
    c.word_ids = best.tokens;
    c.lex_score = best.score;
    c.text = surface_text(model, enc, best.tokens, ex.anon_table);
    res.candidates.push_back(std::move(c));
    return res;
  }
  if (task != Task::kJoint)
    throw ModelError("generate requires a joint or baseline_s2s_copy model, "
                     "got " + task_name(task));

  std::vector<ParsePrediction> parses = predict_parses(model, ex, cfg, cfg.n_parses);
  Encoded enc = model.encode_source(t, ix, off);
  for (const ParsePrediction& pp : parses) {
    std::vector<int> act_ids;
    act_ids.reserve(pp.actions.size());
    for (const Action& a : pp.actions)
      act_ids.push_back(model.vocabs().action.get(action_token(a)));
    Encoded with_parse = enc;
    model.attach_parse(t, with_parse, act_ids, off);
    BeamHyp<WordState> best = word_beam_best(model, t, with_parse, cfg);
    RealisationCandidate c;
    c.parse = pp.actions;
    c.parse_tokens = action_tokens(pp.actions);
    c.word_ids = best.tokens;
    c.syn_score = pp.score;
    c.lex_score = best.score;
    c.text = surface_text(model, with_parse, best.tokens, ex.anon_table);
    res.candidates.push_back(std::move(c));
  }
  std::stable_sort(res.candidates.begin(), res.candidates.end(),
                   [](const RealisationCandidate& a,
                      const RealisationCandidate& b) {
                     return a.joint_score() > b.joint_score();
                   });
  return res;
}

std::vector<std::string> generate_with_oracle_parse(const Seq2SeqModel& model,
                                                    const Example& ex,
                                                    const DecodeConfig& cfg,
                                                    double* lex_score) {
  if (model.config().task != Task::kJoint)
    throw ModelError("oracle-parse generation requires a joint model, got " +
                     task_name(model.config().task));
  try {
    delinearize(ex.parse_actions);
  } catch (const TreeError& err) {
    throw CorpusError("example '" + ex.id + "': malformed oracle parse: " +
                      err.what());
  }
  Tape t;
  DropoutCtx off = model.encoder_dropout(nullptr);
  IndexedExample ix = index_example(ex, model.vocabs());
  Encoded enc = model.encode_source(t, ix, off);
  model.attach_parse(t, enc, ix.action_ids, off);
  BeamHyp<WordState> best = word_beam_best(model, t, enc, cfg);
  if (lex_score) *lex_score = best.score;
  return surface_text(model, enc, best.tokens, ex.anon_table);
}

Eigen::Index sample_index(const Mat& dist, Real temperature, Rng& rng) {
  if (!(temperature > Real(0)))
    throw ConfigError("sampling temperature must be positive");
  const Eigen::Index n = dist.rows();
  std::vector<double> sl(std::size_t(n), -std::numeric_limits<double>::infinity());
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = double(dist(i, 0));
    if (p <= 0) continue;
    sl[std::size_t(i)] = std::log(p) / double(temperature);
    m = std::max(m, sl[std::size_t(i)]);
  }
  if (!std::isfinite(m)) throw ModelError("sampling from an all-zero row");
  double z = 0;
  std::vector<double> w(std::size_t(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(sl[std::size_t(i)])) continue;
    w[std::size_t(i)] = std::exp(sl[std::size_t(i)] - m);
    z += w[std::size_t(i)];
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng) * z;
  for (Eigen::Index i = 0; i < n; ++i) {
    r -= w[std::size_t(i)];
    if (r <= 0 && w[std::size_t(i)] > 0) return i;
  }
  for (Eigen::Index i = n; i-- > 0;)
    if (w[std::size_t(i)] > 0) return i;  // numerical tail
  throw ModelError("sampling failed");
}

SampleResult sample_diverse(const Seq2SeqModel& model, const Example& ex,
                            const DecodeConfig& cfg, Rng& rng) {
  if (model.config().task != Task::kJoint)
    throw ModelError("sample_diverse requires a joint model, got " +
                     task_name(model.config().task));
  if (cfg.num_samples < 1)
    throw ConfigError("num_samples must be at least 1");
  Tape t;
  DropoutCtx off = model.encoder_dropout(nullptr);
  IndexedExample ix = index_example(ex, model.vocabs());
  Encoded enc = model.encode_source(t, ix, off);
  const int budget = syntax_step_budget(cfg.max_syntax_steps);

  SampleResult res;
  std::vector<std::vector<int>> seen;
  for (int k = 0; k < cfg.num_samples; ++k) {
    SynState s{model.init_syntax_state(t, enc), kBosId, ActionAutomaton{}};
    std::vector<int> act_ids;
    for (int step = 0; step < budget && !s.autom.finished(); ++step) {
      StepOut so =
          model.syntax_step(t, enc, s.st, s.last, s.autom.permissible(), off);
      int id = int(sample_index(t.value(so.dist), cfg.temperature, rng));
      act_ids.push_back(id);
      s.autom.apply(action_from_token(model.vocabs().action.token(id)));
      s.st = std::move(so.state);
      s.last = id;
    }
    if (!s.autom.finished())
      throw ModelError("sampled parse failed to close within the step budget");
    if (std::find(seen.begin(), seen.end(), act_ids) != seen.end())
      ++res.duplicates;
    seen.push_back(act_ids);

    Encoded with_parse = enc;
    model.attach_parse(t, with_parse, act_ids, off);
    BeamHyp<WordState> best = word_beam_best(model, t, with_parse, cfg);
    DiverseSample ds;
    ds.parse = actions_from_ids(model.vocabs().action, act_ids);
    ds.text = surface_text(model, with_parse, best.tokens, ex.anon_table);
    res.samples.push_back(std::move(ds));
  }
  return res;
}

std::vector<std::vector<std::string>> sample_baseline(const Seq2SeqModel& model,
                                                      const Example& ex,
                                                      const DecodeConfig& cfg,
                                                      Rng& rng) {
  if (model.config().task != Task::kBaselineS2sCopy)
    throw ModelError("sample_baseline requires a baseline_s2s_copy model, "
                     "got " + task_name(model.config().task));
  if (cfg.num_samples < 1)
    throw ConfigError("num_samples must be at least 1");
  Tape t;
  DropoutCtx off = model.encoder_dropout(nullptr);
  IndexedExample ix = index_example(ex, model.vocabs());
  Encoded enc = model.encode_source(t, ix, off);

  std::vector<std::vector<std::string>> out;
  for (int k = 0; k < cfg.num_samples; ++k) {
    WordState s{model.init_lex_state(t, enc), kBosId};
    std::vector<int> ids;
    for (int step = 0; step < cfg.max_word_steps; ++step) {
      StepOut so = model.lex_step(t, enc, s.st, s.last, off);
      Mat d = t.value(so.dist);
      d(kPadId, 0) = Real(0);
      d(kBosId, 0) = Real(0);
      Eigen::Index id = sample_index(d, cfg.temperature, rng);
      if (id == kEosId) break;
      ids.push_back(int(id));
      s.st = std::move(so.state);
      s.last = id;
    }
    out.push_back(surface_text(model, enc, ids, ex.anon_table));
  }
  return out;
}

}  // namespace amrgen
