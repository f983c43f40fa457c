#pragma once

// Training: per-epoch UNK noise, Adam with plateau learning-rate decay,
// dev-metric model selection, and versioned checkpoints.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "amrgen/model.hpp"

namespace amrgen {

// NaN/inf training loss; mapped to exit code 3 by the command line tools.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

struct TrainConfig {
  Task task = Task::kJoint;
  int hidden = 500;
  int emb = 300;
  int enc_layers = 2;
  int dec_layers = 1;
  Real dropout = 0.5;
  Real rec_dropout = 0.3;
  int batch_size = 40;
  int epochs = 200;
  double lr = 1e-3;  // unstated in the regime this follows; Adam convention
  double lr_decay = 0.8;
  int patience = 5;
  double clip_norm = 5.0;
  Real unk_word_prob = 0.5;  // singleton words
  Real unk_tag_prob = 0.1;   // POS tags and AMR concepts, regardless of count
  unsigned seed = 1;
  int threads = 1;
  std::string embedding_file;  // optional pretrained embeddings

  ModelConfig model_config() const;
  void validate() const;  // throws ConfigError
};

// Named bundles of defaults; "desk" shrinks to hidden 64 / embedding 32 so
// full training runs complete in minutes.
void apply_preset(TrainConfig& cfg, const std::string& name);

// Flat key-value configuration text: one `key value` or `key = value` per
// line, '#' comments.  Unknown keys or unparsable values throw ConfigError.
void apply_config_kv(TrainConfig& cfg, const std::string& key,
                     const std::string& value);
void apply_config_text(TrainConfig& cfg, std::istream& in,
                       const std::string& source);

// Positions eligible for UNK replacement, precomputed once per example:
// singleton words, POS-tag actions, and AMR concepts (roles, brackets and
// anonymization placeholders are never replaced).
struct NoisePlan {
  std::vector<std::uint8_t> amr;
  std::vector<std::uint8_t> action;
  std::vector<std::uint8_t> word;
};

NoisePlan make_noise_plan(const IndexedExample& ex, const VocabSet& vocabs);

// Independent per-position replacement, drawn fresh every epoch.
void apply_unk_noise(IndexedExample& ex, const NoisePlan& plan,
                     const TrainConfig& cfg, Rng& rng);

// Dev-set selection metric: corpus BLEU for text-producing tasks (greedy,
// single parse), labelled span F1 for parse prediction, perplexity for the
// action-sequence language model.
const char* dev_metric_name(Task task);
bool dev_metric_improved(Task task, double candidate, double best);
double dev_metric(const Seq2SeqModel& model, const Corpus& dev);

struct EpochLog {
  int epoch = 0;
  double train_nll = 0;  // per predicted token, over the noised epoch
  double dev_metric = 0;
  double lr = 0;
};

struct TrainResult {
  std::unique_ptr<Seq2SeqModel> model;  // parameters of the best dev epoch
  int best_epoch = 0;
  double best_metric = 0;
  std::vector<EpochLog> history;
};

// Runs the full regime; writes one JSON object per epoch to `log` when set.
TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus,
                  const Corpus& dev_corpus, std::ostream* log = nullptr);

// One token + space-separated floats per line; listed tokens overwrite the
// matching rows of the word and AMR embedding tables, the rest keep their
// random initialisation.
void load_pretrained_embeddings(Seq2SeqModel& model, const std::string& path);

struct Checkpoint {
  TrainConfig config;
  int epoch = 0;
  std::vector<double> dev_history;
  std::unique_ptr<Seq2SeqModel> model;
};

void save_checkpoint(const std::string& path, const Seq2SeqModel& model,
                     const TrainConfig& cfg, int epoch,
                     const std::vector<double>& dev_history);
Checkpoint load_checkpoint(const std::string& path);
// Refuses checkpoints trained for a different task.
Checkpoint load_checkpoint(const std::string& path, Task expected);

}  // namespace amrgen
