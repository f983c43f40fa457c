#pragma once

// The two-stage generation model.  A shared bidirectional encoder reads the
// linearized AMR; the syntax decoder predicts the delexicalised parse as a
// masked action sequence, and the lexicalisation decoder realises the words
// with dual attention over AMR and parse plus a copy gate over the AMR
// input.  Single-task variants (parse-only conditioned on AMR or text, an
// unconditional parse LM, and a syntax-free copy baseline) reuse the same
// pieces and are selected by Task.

#include <string>
#include <vector>

#include "amrgen/corpus.hpp"
#include "amrgen/nn.hpp"

namespace amrgen {

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

enum class Task {
  kJoint,            // AMR -> parse -> text, trained jointly
  kAmr2Parse,        // syntax stage alone
  kText2Parse,       // parse prediction from the reference words
  kUnconditionalLm,  // action-sequence language model
  kBaselineS2sCopy,  // AMR -> text with copy, no syntax stage
};

std::string task_name(Task t);
Task task_from_name(const std::string& name);  // ConfigError on unknown names

struct ModelConfig {
  Task task = Task::kJoint;
  int hidden = 500;      // decoder size; encoder directions use the same h
  int emb = 300;
  int enc_layers = 2;
  int dec_layers = 1;
  Real dropout = 0.5;      // non-recurrent
  Real rec_dropout = 0.3;  // tied recurrent
};

// An Example resolved against the vocabularies.  Token strings are kept for
// the copy machinery (dynamic extended-vocabulary slots, OOV word targets).
struct IndexedExample {
  std::vector<int> amr_ids;
  std::vector<int> action_ids;
  std::vector<int> word_ids;
  std::vector<std::string> amr_tokens;
  std::vector<std::string> words;
};

IndexedExample index_example(const Example& e, const VocabSet& v);

// Per-example encoder work, reused across decoding steps.  `copy_ids` maps
// each AMR position to a row of the extended output vocabulary: the word
// vocabulary followed by one dynamic slot per distinct OOV AMR token.
struct Encoded {
  bool has_src = false;
  bool has_parse = false;
  EncRun src;
  EncRun parse;
  std::vector<Eigen::Index> copy_ids;
  Eigen::Index ext_size = 0;
  std::vector<std::string> ext_tokens;
};

struct DecState {
  std::vector<LstmState> layers;
};

struct StepOut {
  Var dist;  // probabilities: [action vocab] or [extended word vocab]
  DecState state;
  Var theta;  // copy-gate value, lexicalisation steps only
  bool has_theta = false;
};

struct LossOut {
  Var total;
  double parse_nll = 0;
  double text_nll = 0;
  int parse_tokens = 0;
  int text_tokens = 0;
};

// Maps a kind-level mask from the automaton onto the action vocabulary.
// <pad>/<bos>/<eos> are never permitted; <unk> behaves as a terminal.
MaskVec action_mask_vec(const Vocab& actions, const ActionMask& m);

class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig cfg, VocabSet vocabs, unsigned seed);

  const ModelConfig& config() const { return cfg_; }
  const VocabSet& vocabs() const { return vocabs_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  bool has_syntax_stage() const { return use_syntax_; }
  bool has_lex_stage() const { return use_lex_; }

  // Encodes whatever the task conditions on (AMR, or words for text2parse;
  // nothing for the unconditional LM) and builds the copy tables.
  Encoded encode_source(Tape& t, const IndexedExample& ex,
                        const DropoutCtx& drop) const;

  // Joint task only: encode a (gold or predicted) action sequence for the
  // lexicalisation stage's parse attention.
  void attach_parse(Tape& t, Encoded& enc, const std::vector<int>& action_ids,
                    const DropoutCtx& drop) const;

  DecState init_syntax_state(Tape& t, const Encoded& enc) const;
  DecState init_lex_state(Tape& t, const Encoded& enc) const;

  StepOut syntax_step(Tape& t, const Encoded& enc, const DecState& st,
                      int prev_action, const ActionMask& mask,
                      const DropoutCtx& drop) const;
  StepOut lex_step(Tape& t, const Encoded& enc, const DecState& st,
                   Eigen::Index prev_word, const DropoutCtx& drop) const;

  // Gold word targets in extended-vocabulary space, EOS appended.
  std::vector<Eigen::Index> word_targets(const IndexedExample& ex,
                                         const Encoded& enc) const;

  // Teacher-forced negative log-likelihoods of explicit output sequences;
  // decoding uses these to rescore its own outputs.
  Var syntax_nll(Tape& t, const Encoded& enc, const std::vector<int>& gold,
                 const DropoutCtx& drop) const;
  Var words_nll(Tape& t, const Encoded& enc,
                const std::vector<Eigen::Index>& ext_targets,
                const DropoutCtx& drop) const;

  // Surface string for an extended-vocabulary row.
  std::string output_token(const Encoded& enc, Eigen::Index id) const;

  // Teacher-forced loss of one example under the configured task; pass a
  // null rng to disable dropout (evaluation).
  LossOut example_loss(Tape& t, const IndexedExample& ex, Rng* dropout_rng) const;

  DropoutCtx encoder_dropout(Rng* rng) const;
  DropoutCtx decoder_dropout(Rng* rng) const;

 private:
  void init_params(unsigned seed);

  ModelConfig cfg_;
  VocabSet vocabs_;
  ParamStore params_;

  bool use_syntax_ = false;   // syntax decoder present
  bool use_lex_ = false;      // lexicalisation decoder present
  bool src_is_amr_ = false;   // source encoder reads AMR tokens
  bool src_is_text_ = false;  // source encoder reads words
  bool use_parse_enc_ = false;

  Parameter* amr_emb_ = nullptr;
  Parameter* act_emb_ = nullptr;
  Parameter* word_emb_ = nullptr;
  BiEncoderP amr_enc_, txt_enc_, parse_enc_;

  StackedLstmP syn_lstm_;
  AttentionP syn_att_;
  Parameter* syn_in_ = nullptr;
  LnAffineP syn_out_;
  Parameter* syn_proj_ = nullptr;
  std::vector<LnAffineP> syn_init_h_, syn_init_c_;

  StackedLstmP lex_lstm_;
  AttentionP lex_att_amr_, lex_att_parse_;
  Parameter* lex_in_ = nullptr;
  LnAffineP lex_out_;
  Parameter* lex_proj_ = nullptr;
  LnAffineP gate_h_;
  Parameter* gate_o_ = nullptr;
  Parameter* gate_ob_ = nullptr;
  std::vector<LnAffineP> lex_init_h_, lex_init_c_;
};

}  // namespace amrgen
