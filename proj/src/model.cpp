#include "amrgen/model.hpp"

#include <algorithm>

namespace amrgen {

std::string task_name(Task t) {
  switch (t) {
    case Task::kJoint: return "joint";
    case Task::kAmr2Parse: return "amr2parse";
    case Task::kText2Parse: return "text2parse";
    case Task::kUnconditionalLm: return "unconditional_lm";
    case Task::kBaselineS2sCopy: return "baseline_s2s_copy";
  }
  throw ModelError("unreachable task");
}

Task task_from_name(const std::string& name) {
  for (Task t : {Task::kJoint, Task::kAmr2Parse, Task::kText2Parse,
                 Task::kUnconditionalLm, Task::kBaselineS2sCopy})
    if (task_name(t) == name) return t;
  throw ConfigError("unknown task '" + name +
                    "' (expected joint, amr2parse, text2parse, "
                    "unconditional_lm or baseline_s2s_copy)");
}

IndexedExample index_example(const Example& e, const VocabSet& v) {
  IndexedExample ix;
  ix.amr_tokens = e.amr_tokens;
  ix.words = e.words;
  ix.amr_ids.reserve(e.amr_tokens.size());
  for (const auto& t : e.amr_tokens) ix.amr_ids.push_back(v.amr.get(t));
  ix.action_ids.reserve(e.parse_actions.size());
  for (const Action& a : e.parse_actions)
    ix.action_ids.push_back(v.action.get(action_token(a)));
  ix.word_ids.reserve(e.words.size());
  for (const auto& w : e.words) ix.word_ids.push_back(v.word.get(w));
  return ix;
}

MaskVec action_mask_vec(const Vocab& actions, const ActionMask& m) {
  MaskVec mv(actions.size(), 0);
  mv[kUnkId] = m.terminal ? 1 : 0;
  for (int id = 4; id < actions.size(); ++id) {
    Action a = action_from_token(actions.tokens[std::size_t(id)]);
    bool ok = a.kind == Action::kOpen      ? m.open
              : a.kind == Action::kClose   ? m.close
                                           : m.terminal;
    mv[std::size_t(id)] = ok ? 1 : 0;
  }
  return mv;
}

Seq2SeqModel::Seq2SeqModel(ModelConfig cfg, VocabSet vocabs, unsigned seed)
    : cfg_(std::move(cfg)), vocabs_(std::move(vocabs)) {
  if (cfg_.hidden <= 0 || cfg_.emb <= 0 || cfg_.enc_layers <= 0 ||
      cfg_.dec_layers <= 0)
    throw ConfigError("model dimensions must be positive");
  switch (cfg_.task) {
    case Task::kJoint:
      use_syntax_ = use_lex_ = src_is_amr_ = use_parse_enc_ = true;
      break;
    case Task::kAmr2Parse:
      use_syntax_ = src_is_amr_ = true;
      break;
    case Task::kText2Parse:
      use_syntax_ = src_is_text_ = true;
      break;
    case Task::kUnconditionalLm:
      use_syntax_ = true;
      break;
    case Task::kBaselineS2sCopy:
      use_lex_ = src_is_amr_ = true;
      break;
  }

  const Eigen::Index h = cfg_.hidden, e = cfg_.emb;
  const Eigen::Index ctx = 2 * h;  // bidirectional per-position context
  const bool syn_att = use_syntax_ && (src_is_amr_ || src_is_text_);
  const Eigen::Index lex_ctx = use_parse_enc_ ? 2 * ctx : ctx;

  if (src_is_amr_)
    amr_emb_ = params_.add("amr_emb", vocabs_.amr.size(), e);
  if (use_syntax_)
    act_emb_ = params_.add("act_emb", vocabs_.action.size(), e);
  if (use_lex_ || src_is_text_)
    word_emb_ = params_.add("word_emb", vocabs_.word.size(), e);

  if (src_is_amr_)
    amr_enc_ = make_bi_encoder(params_, "amr_enc", e, h, cfg_.enc_layers);
  if (src_is_text_)
    txt_enc_ = make_bi_encoder(params_, "txt_enc", e, h, cfg_.enc_layers);
  if (use_parse_enc_)
    parse_enc_ = make_bi_encoder(params_, "parse_enc", e, h, cfg_.enc_layers);

  if (use_syntax_) {
    syn_lstm_ = make_stacked_lstm(params_, "syn_dec.lstm", e, h, cfg_.dec_layers);
    if (syn_att) {
      syn_att_ = make_attention(params_, "syn_dec.att", h, ctx);
      syn_in_ = params_.add("syn_dec.in", e, e + ctx);
      syn_out_ = make_ln_affine(params_, "syn_dec.out", h, h + ctx);
      for (int l = 0; l < cfg_.dec_layers; ++l) {
        std::string sl = ".l" + std::to_string(l);
        syn_init_h_.push_back(
            make_ln_affine(params_, "syn_dec.init_h" + sl, h, ctx));
        syn_init_c_.push_back(
            make_ln_affine(params_, "syn_dec.init_c" + sl, h, ctx));
      }
    } else {
      syn_in_ = params_.add("syn_dec.in", e, e);
      syn_out_ = make_ln_affine(params_, "syn_dec.out", h, h);
    }
    syn_proj_ = params_.add("syn_dec.proj", vocabs_.action.size(), h);
  }

  if (use_lex_) {
    lex_lstm_ = make_stacked_lstm(params_, "lex_dec.lstm", e, h, cfg_.dec_layers);
    lex_att_amr_ = make_attention(params_, "lex_dec.att_amr", h, ctx);
    if (use_parse_enc_)
      lex_att_parse_ = make_attention(params_, "lex_dec.att_parse", h, ctx);
    lex_in_ = params_.add("lex_dec.in", e, e + lex_ctx);
    lex_out_ = make_ln_affine(params_, "lex_dec.out", h, h + lex_ctx);
    gate_h_ = make_ln_affine(params_, "lex_dec.gate.h", h, e + h + lex_ctx);
    gate_o_ = params_.add("lex_dec.gate.o", 1, h);
    gate_ob_ = params_.add("lex_dec.gate.ob", 1, 1);
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      std::string sl = ".l" + std::to_string(l);
      lex_init_h_.push_back(
          make_ln_affine(params_, "lex_dec.init_h" + sl, h, lex_ctx));
      lex_init_c_.push_back(
          make_ln_affine(params_, "lex_dec.init_c" + sl, h, lex_ctx));
    }
    lex_proj_ = params_.add("lex_dec.proj", vocabs_.word.size(), h);
  }

  init_params(seed);
}

void Seq2SeqModel::init_params(unsigned seed) {
  Rng rng(seed);
  for (Parameter* p : params_.all()) {
    const std::string& n = p->name;
    if (n.find(".ln_g") != std::string::npos) {
      p->init_const(Real(1));
    } else if (n.size() >= 7 && n.compare(n.size() - 7, 7, ".ln_b.f") == 0) {
      p->init_const(Real(1));  // forget-gate bias starts open
    } else if (n.find(".ln_b") != std::string::npos) {
      p->init_const(Real(0));
    } else {
      p->init_uniform(rng, Real(0.1));
    }
  }
}

DropoutCtx Seq2SeqModel::encoder_dropout(Rng* rng) const {
  return make_dropout_ctx(cfg_.dropout, cfg_.rec_dropout,
                          Eigen::Index(cfg_.hidden), 0, rng);
}

DropoutCtx Seq2SeqModel::decoder_dropout(Rng* rng) const {
  return make_dropout_ctx(cfg_.dropout, cfg_.rec_dropout,
                          Eigen::Index(cfg_.hidden), cfg_.dec_layers, rng);
}

Encoded Seq2SeqModel::encode_source(Tape& t, const IndexedExample& ex,
                                    const DropoutCtx& drop) const {
  Encoded enc;
  if (src_is_text_) {
    std::vector<Var> xs;
    xs.reserve(ex.word_ids.size());
    for (int id : ex.word_ids)
      xs.push_back(lookup(t, *word_emb_, Eigen::Index(id)));
    enc.src = run_bi_encoder(t, txt_enc_, xs, drop);
    enc.has_src = true;
    return enc;
  }
  if (!src_is_amr_) return enc;  // unconditional LM
  if (ex.amr_ids.size() != ex.amr_tokens.size())
    throw ModelError("indexed example: AMR ids and tokens disagree");
  std::vector<Var> xs;
  xs.reserve(ex.amr_ids.size());
  for (int id : ex.amr_ids)
    xs.push_back(lookup(t, *amr_emb_, Eigen::Index(id)));
  enc.src = run_bi_encoder(t, amr_enc_, xs, drop);
  enc.has_src = true;
  if (use_lex_) {
    const Eigen::Index vw = vocabs_.word.size();
    enc.copy_ids.reserve(ex.amr_tokens.size());
    for (const std::string& tok : ex.amr_tokens) {
      int id = vocabs_.word.get(tok);
      if (id != kUnkId || tok == kUnkTok) {
        enc.copy_ids.push_back(id);
        continue;
      }
      auto it = std::find(enc.ext_tokens.begin(), enc.ext_tokens.end(), tok);
      Eigen::Index slot;
      if (it == enc.ext_tokens.end()) {
        slot = Eigen::Index(enc.ext_tokens.size());
        enc.ext_tokens.push_back(tok);
      } else {
        slot = it - enc.ext_tokens.begin();
      }
      enc.copy_ids.push_back(vw + slot);
    }
    enc.ext_size = vw + Eigen::Index(enc.ext_tokens.size());
  }
  return enc;
}

void Seq2SeqModel::attach_parse(Tape& t, Encoded& enc,
                                const std::vector<int>& action_ids,
                                const DropoutCtx& drop) const {
  if (!use_parse_enc_)
    throw ModelError("task " + task_name(cfg_.task) + " has no parse encoder");
  std::vector<Var> xs;
  xs.reserve(action_ids.size());
  for (int id : action_ids)
    xs.push_back(lookup(t, *act_emb_, Eigen::Index(id)));
  enc.parse = run_bi_encoder(t, parse_enc_, xs, drop);
  enc.has_parse = true;
}

DecState Seq2SeqModel::init_syntax_state(Tape& t, const Encoded& enc) const {
  if (!use_syntax_) throw ModelError("model has no syntax stage");
  DecState st;
  if (syn_init_h_.empty()) {
    for (int l = 0; l < cfg_.dec_layers; ++l)
      st.layers.push_back(lstm_zero_state<Real>(t, cfg_.hidden));
    return st;
  }
  if (!enc.has_src) throw ModelError("syntax decoder needs an encoded source");
  Var sh = enc.src.final_h.back();
  Var sc = enc.src.final_c.back();
  for (int l = 0; l < cfg_.dec_layers; ++l)
    st.layers.push_back(LstmState{ln_affine_tanh(t, syn_init_h_[std::size_t(l)], sh),
                                  ln_affine_tanh(t, syn_init_c_[std::size_t(l)], sc)});
  return st;
}

DecState Seq2SeqModel::init_lex_state(Tape& t, const Encoded& enc) const {
  if (!use_lex_) throw ModelError("model has no lexicalisation stage");
  if (!enc.has_src) throw ModelError("lex decoder needs an encoded source");
  if (use_parse_enc_ && !enc.has_parse)
    throw ModelError("lex decoder needs attach_parse first");
  Var sh = enc.src.final_h.back();
  Var sc = enc.src.final_c.back();
  if (use_parse_enc_) {
    sh = concat_rows(t, {sh, enc.parse.final_h.back()});
    sc = concat_rows(t, {sc, enc.parse.final_c.back()});
  }
  DecState st;
  for (int l = 0; l < cfg_.dec_layers; ++l)
    st.layers.push_back(LstmState{ln_affine_tanh(t, lex_init_h_[std::size_t(l)], sh),
                                  ln_affine_tanh(t, lex_init_c_[std::size_t(l)], sc)});
  return st;
}

StepOut Seq2SeqModel::syntax_step(Tape& t, const Encoded& enc,
                                  const DecState& st, int prev_action,
                                  const ActionMask& mask,
                                  const DropoutCtx& drop) const {
  if (!use_syntax_) throw ModelError("model has no syntax stage");
  Var y = lookup(t, *act_emb_, Eigen::Index(prev_action));
  const bool att = src_is_amr_ || src_is_text_;
  Var pre, s;
  if (att) {
    if (!enc.has_src) throw ModelError("syntax decoder needs an encoded source");
    AttnOut a = attend(t, syn_att_, st.layers.back().h, enc.src);
    s = a.context;
    pre = tanh_op(t, concat_rows(t, {y, s}));
  } else {
    pre = tanh_op(t, y);
  }
  Var ytilde = matmul(t, t.param(*syn_in_), pre);
  ytilde = nonrec_dropout(t, ytilde, drop);
  StepOut out;
  out.state.layers = stacked_step(t, syn_lstm_, ytilde, st.layers, drop);
  Var ht = out.state.layers.back().h;
  Var htilde = ln_affine_tanh(t, syn_out_,
                              att ? concat_rows(t, {ht, s}) : ht);
  htilde = nonrec_dropout(t, htilde, drop);
  Var logits = matmul(t, t.param(*syn_proj_), htilde);
  MaskVec mv = action_mask_vec(vocabs_.action, mask);
  out.dist = softmax(t, logits, &mv);
  return out;
}

StepOut Seq2SeqModel::lex_step(Tape& t, const Encoded& enc, const DecState& st,
                               Eigen::Index prev_word,
                               const DropoutCtx& drop) const {
  if (!use_lex_) throw ModelError("model has no lexicalisation stage");
  if (!enc.has_src) throw ModelError("lex decoder needs an encoded source");
  if (use_parse_enc_ && !enc.has_parse)
    throw ModelError("lex decoder needs attach_parse first");
  const Eigen::Index vw = vocabs_.word.size();
  Var y = lookup(t, *word_emb_, prev_word < vw ? prev_word : kUnkId);
  Var h_prev = st.layers.back().h;
  AttnOut amr = attend(t, lex_att_amr_, h_prev, enc.src);
  Var s = amr.context;
  if (use_parse_enc_) {
    AttnOut parse = attend(t, lex_att_parse_, h_prev, enc.parse);
    s = concat_rows(t, {s, parse.context});
  }
  Var ytilde = matmul(t, t.param(*lex_in_),
                      tanh_op(t, concat_rows(t, {y, s})));
  ytilde = nonrec_dropout(t, ytilde, drop);
  StepOut out;
  out.state.layers = stacked_step(t, lex_lstm_, ytilde, st.layers, drop);
  Var ht = out.state.layers.back().h;
  Var htilde = ln_affine_tanh(t, lex_out_, concat_rows(t, {ht, s}));
  htilde = nonrec_dropout(t, htilde, drop);
  Var logits = matmul(t, t.param(*lex_proj_), htilde);
  Var p_lex = softmax(t, logits);
  if (enc.ext_size > vw) p_lex = pad_rows(t, p_lex, enc.ext_size);
  Var copy = scatter_sum(t, amr.weights, enc.copy_ids, enc.ext_size);
  Var ghid = ln_affine_tanh(t, gate_h_, concat_rows(t, {y, ht, s}));
  Var glogit = add(t, matmul(t, t.param(*gate_o_), ghid), t.param(*gate_ob_));
  out.theta = sigmoid_op(t, glogit);
  out.has_theta = true;
  out.dist = add(t, scale_by(t, p_lex, one_minus(t, out.theta)),
                 scale_by(t, copy, out.theta));
  return out;
}

std::vector<Eigen::Index> Seq2SeqModel::word_targets(const IndexedExample& ex,
                                                     const Encoded& enc) const {
  const Eigen::Index vw = vocabs_.word.size();
  std::vector<Eigen::Index> tg;
  tg.reserve(ex.words.size() + 1);
  for (const std::string& w : ex.words) {
    int id = vocabs_.word.get(w);
    if (id == kUnkId && w != kUnkTok) {
      auto it = std::find(enc.ext_tokens.begin(), enc.ext_tokens.end(), w);
      if (it != enc.ext_tokens.end()) {
        tg.push_back(vw + (it - enc.ext_tokens.begin()));
        continue;
      }
    }
    tg.push_back(id);
  }
  tg.push_back(kEosId);
  return tg;
}

std::string Seq2SeqModel::output_token(const Encoded& enc,
                                       Eigen::Index id) const {
  const Eigen::Index vw = vocabs_.word.size();
  if (id < vw) return vocabs_.word.token(int(id));
  Eigen::Index slot = id - vw;
  if (slot < 0 || slot >= Eigen::Index(enc.ext_tokens.size()))
    throw ModelError("extended vocabulary id out of range: " +
                     std::to_string(id));
  return enc.ext_tokens[std::size_t(slot)];
}

Var Seq2SeqModel::syntax_nll(Tape& t, const Encoded& enc,
                             const std::vector<int>& gold,
                             const DropoutCtx& drop) const {
  if (gold.empty()) throw ModelError("empty action sequence");
  DecState st = init_syntax_state(t, enc);
  ActionAutomaton autom;
  int prev = kBosId;
  std::vector<Var> lps;
  lps.reserve(gold.size());
  for (int id : gold) {
    StepOut so = syntax_step(t, enc, st, prev, autom.permissible(), drop);
    Var p = pick(t, so.dist, Eigen::Index(id));
    if (t.value(p)(0, 0) <= Real(0))
      throw ModelError("gold action '" + vocabs_.action.token(id) +
                       "' is masked out at step " +
                       std::to_string(autom.steps()));
    lps.push_back(log_op(t, p));
    autom.apply(action_from_token(vocabs_.action.token(id)));
    st = std::move(so.state);
    prev = id;
  }
  if (!autom.finished())
    throw ModelError("gold action sequence does not close the parse");
  return neg(t, sum(t, concat_rows(t, lps)));
}

Var Seq2SeqModel::words_nll(Tape& t, const Encoded& enc,
                            const std::vector<Eigen::Index>& ext_targets,
                            const DropoutCtx& drop) const {
  if (ext_targets.empty()) throw ModelError("empty word target sequence");
  DecState st = init_lex_state(t, enc);
  Eigen::Index prev = kBosId;
  std::vector<Var> lps;
  lps.reserve(ext_targets.size());
  for (Eigen::Index tgt : ext_targets) {
    StepOut so = lex_step(t, enc, st, prev, drop);
    Var p = pick(t, so.dist, tgt);
    if (t.value(p)(0, 0) <= Real(0))
      throw ModelError("gold word has zero probability");
    lps.push_back(log_op(t, p));
    st = std::move(so.state);
    prev = tgt;
  }
  return neg(t, sum(t, concat_rows(t, lps)));
}

LossOut Seq2SeqModel::example_loss(Tape& t, const IndexedExample& ex,
                                   Rng* dropout_rng) const {
  DropoutCtx enc_drop = encoder_dropout(dropout_rng);
  Encoded enc = encode_source(t, ex, enc_drop);
  LossOut lo;
  std::vector<Var> parts;
  if (use_syntax_) {
    DropoutCtx syn_drop = decoder_dropout(dropout_rng);
    Var nll = syntax_nll(t, enc, ex.action_ids, syn_drop);
    lo.parse_nll = t.value(nll)(0, 0);
    lo.parse_tokens = int(ex.action_ids.size());
    parts.push_back(nll);
  }
  if (use_lex_) {
    if (use_parse_enc_) attach_parse(t, enc, ex.action_ids, enc_drop);
    DropoutCtx lex_drop = decoder_dropout(dropout_rng);
    std::vector<Eigen::Index> targets = word_targets(ex, enc);
    Var nll = words_nll(t, enc, targets, lex_drop);
    lo.text_nll = t.value(nll)(0, 0);
    lo.text_tokens = int(targets.size());
    parts.push_back(nll);
  }
  lo.total = parts.size() == 2 ? add(t, parts[0], parts[1]) : parts[0];
  return lo;
}

}  // namespace amrgen
