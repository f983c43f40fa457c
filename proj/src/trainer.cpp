#include "amrgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "amrgen/decode.hpp"
#include "amrgen/metrics.hpp"
#include "amrgen/penman.hpp"

namespace amrgen {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool amr_concept_token(const std::string& tok) {
  if (tok.empty() || tok[0] == ':') return false;  // role
  if (tok == "(" || tok == ")") return false;
  if (is_anon_placeholder(tok)) return false;
  return true;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

ordered_json config_json(const TrainConfig& cfg) {
  ordered_json j;
  j["task"] = task_name(cfg.task);
  j["hidden"] = cfg.hidden;
  j["emb"] = cfg.emb;
  j["enc_layers"] = cfg.enc_layers;
  j["dec_layers"] = cfg.dec_layers;
  j["dropout"] = double(cfg.dropout);
  j["rec_dropout"] = double(cfg.rec_dropout);
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.lr;
  j["lr_decay"] = cfg.lr_decay;
  j["patience"] = cfg.patience;
  j["clip_norm"] = cfg.clip_norm;
  j["unk_word_prob"] = double(cfg.unk_word_prob);
  j["unk_tag_prob"] = double(cfg.unk_tag_prob);
  j["seed"] = cfg.seed;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.task = task_from_name(j.at("task").get<std::string>());
  cfg.hidden = j.at("hidden").get<int>();
  cfg.emb = j.at("emb").get<int>();
  cfg.enc_layers = j.at("enc_layers").get<int>();
  cfg.dec_layers = j.at("dec_layers").get<int>();
  cfg.dropout = Real(j.at("dropout").get<double>());
  cfg.rec_dropout = Real(j.at("rec_dropout").get<double>());
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.lr_decay = j.at("lr_decay").get<double>();
  cfg.patience = j.at("patience").get<int>();
  cfg.clip_norm = j.at("clip_norm").get<double>();
  cfg.unk_word_prob = Real(j.at("unk_word_prob").get<double>());
  cfg.unk_tag_prob = Real(j.at("unk_tag_prob").get<double>());
  cfg.seed = j.at("seed").get<unsigned>();
  return cfg;
}

ordered_json vocab_json(const Vocab& v) {
  ordered_json j;
  j["tokens"] = v.tokens;
  ordered_json counts = ordered_json::object();
  for (const auto& [tok, n] : v.counts) counts[tok] = n;
  j["counts"] = std::move(counts);
  return j;
}

Vocab vocab_from_json(const json& j) {
  const auto toks = j.at("tokens").get<std::vector<std::string>>();
  if (toks.size() < 4 || toks[0] != kPadTok || toks[1] != kUnkTok ||
      toks[2] != kBosTok || toks[3] != kEosTok)
    throw CorpusError("checkpoint vocabulary lacks the reserved tokens");
  Vocab v;
  for (std::size_t i = 4; i < toks.size(); ++i) v.add(toks[i]);
  for (const auto& [tok, n] : j.at("counts").items())
    v.counts[tok] = n.get<long long>();
  return v;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw CorpusError("checkpoint truncated");
  return v;
}

std::string read_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  if (!in) throw CorpusError("checkpoint truncated");
  return s;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.task = task;
  m.hidden = hidden;
  m.emb = emb;
  m.enc_layers = enc_layers;
  m.dec_layers = dec_layers;
  m.dropout = dropout;
  m.rec_dropout = rec_dropout;
  return m;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw ConfigError(msg); };
  if (hidden < 1 || emb < 1 || enc_layers < 1 || dec_layers < 1)
    bad("model sizes must be positive");
  if (batch_size < 1) bad("batch_size must be at least 1");
  if (epochs < 1) bad("epochs must be at least 1");
  if (!(lr > 0)) bad("lr must be positive");
  if (!(lr_decay > 0) || lr_decay > 1) bad("lr_decay must be in (0, 1]");
  if (patience < 1) bad("patience must be at least 1");
  if (!(clip_norm > 0)) bad("clip_norm must be positive");
  auto prob = [&](Real p, const char* name) {
    if (p < Real(0) || p > Real(1))
      bad(std::string(name) + " must be in [0, 1]");
  };
  prob(unk_word_prob, "unk_word_prob");
  prob(unk_tag_prob, "unk_tag_prob");
  prob(dropout, "dropout");
  prob(rec_dropout, "rec_dropout");
  if (threads < 1) bad("threads must be at least 1");
}

void apply_preset(TrainConfig& cfg, const std::string& name) {
  if (name == "desk") {
    cfg.hidden = 64;
    cfg.emb = 32;
    return;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

void apply_config_kv(TrainConfig& cfg, const std::string& key,
                     const std::string& value) {
  try {
    if (key == "task")
      cfg.task = task_from_name(value);
    else if (key == "preset")
      apply_preset(cfg, value);
    else if (key == "hidden")
      cfg.hidden = std::stoi(value);
    else if (key == "emb")
      cfg.emb = std::stoi(value);
    else if (key == "enc_layers")
      cfg.enc_layers = std::stoi(value);
    else if (key == "dec_layers")
      cfg.dec_layers = std::stoi(value);
    else if (key == "dropout")
      cfg.dropout = Real(std::stod(value));
    else if (key == "rec_dropout")
      cfg.rec_dropout = Real(std::stod(value));
    else if (key == "batch_size")
      cfg.batch_size = std::stoi(value);
    else if (key == "epochs")
      cfg.epochs = std::stoi(value);
    else if (key == "lr")
      cfg.lr = std::stod(value);
    else if (key == "lr_decay")
      cfg.lr_decay = std::stod(value);
    else if (key == "patience")
      cfg.patience = std::stoi(value);
    else if (key == "clip_norm")
      cfg.clip_norm = std::stod(value);
    else if (key == "unk_word_prob")
      cfg.unk_word_prob = Real(std::stod(value));
    else if (key == "unk_tag_prob")
      cfg.unk_tag_prob = Real(std::stod(value));
    else if (key == "seed")
      cfg.seed = unsigned(std::stoul(value));
    else if (key == "threads")
      cfg.threads = std::stoi(value);
    else if (key == "embeddings")
      cfg.embedding_file = value;
    else
      throw ConfigError("unknown config key '" + key + "'");
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "': cannot parse value '" +
                      value + "'");
  }
}

void apply_config_text(TrainConfig& cfg, std::istream& in,
                       const std::string& source) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t sp = line.find_first_of(" \t=");
    if (sp == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": expected 'key value', got '" + line + "'");
    std::string key = line.substr(0, sp);
    std::string value = trim(line.substr(sp));
    if (!value.empty() && value[0] == '=') value = trim(value.substr(1));
    if (value.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": missing value for key '" + key + "'");
    apply_config_kv(cfg, key, value);
  }
}

NoisePlan make_noise_plan(const IndexedExample& ex, const VocabSet& vocabs) {
  NoisePlan plan;
  plan.amr.reserve(ex.amr_tokens.size());
  for (const std::string& tok : ex.amr_tokens)
    plan.amr.push_back(amr_concept_token(tok) ? 1 : 0);
  plan.action.reserve(ex.action_ids.size());
  for (int id : ex.action_ids) {
    if (id == kUnkId) {
      plan.action.push_back(1);  // already unknown; replacement is a no-op
      continue;
    }
    Action a = action_from_token(vocabs.action.token(id));
    plan.action.push_back(a.kind == Action::Kind::kTerminal ? 1 : 0);
  }
  plan.word.reserve(ex.words.size());
  for (const std::string& w : ex.words)
    plan.word.push_back(vocabs.word.count(w) == 1 ? 1 : 0);
  return plan;
}

void apply_unk_noise(IndexedExample& ex, const NoisePlan& plan,
                     const TrainConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < ex.amr_ids.size(); ++i)
    if (plan.amr[i] && u(rng) < double(cfg.unk_tag_prob))
      ex.amr_ids[i] = kUnkId;
  for (std::size_t i = 0; i < ex.action_ids.size(); ++i)
    if (plan.action[i] && u(rng) < double(cfg.unk_tag_prob))
      ex.action_ids[i] = kUnkId;
  for (std::size_t i = 0; i < ex.word_ids.size(); ++i)
    if (plan.word[i] && u(rng) < double(cfg.unk_word_prob))
      ex.word_ids[i] = kUnkId;
}

const char* dev_metric_name(Task task) {
  switch (task) {
    case Task::kJoint:
    case Task::kBaselineS2sCopy:
      return "bleu";
    case Task::kAmr2Parse:
    case Task::kText2Parse:
      return "f1";
    case Task::kUnconditionalLm:
      return "perplexity";
  }
  throw ConfigError("unknown task");
}

bool dev_metric_improved(Task task, double candidate, double best) {
  if (task == Task::kUnconditionalLm) return candidate < best;
  return candidate > best;
}

double dev_metric(const Seq2SeqModel& model, const Corpus& dev) {
  if (dev.empty()) throw ConfigError("dev corpus is empty");
  const Task task = model.config().task;
  if (task == Task::kJoint || task == Task::kBaselineS2sCopy) {
    DecodeConfig dc;  // greedy decoding with a single parse, for speed
    dc.beam_width = 1;
    dc.n_parses = 1;
    std::vector<TokenSeq> hyps, refs;
    for (const Example& ex : dev) {
      hyps.push_back(generate(model, ex, dc).best().text);
      refs.push_back(deanonymize(ex.words, ex.anon_table).tokens);
    }
    return corpus_bleu(hyps, refs);
  }
  if (task == Task::kAmr2Parse || task == Task::kText2Parse) {
    DecodeConfig dc;
    dc.beam_width = 1;
    std::vector<std::pair<std::string, ConstituencyTree>> pred, ref;
    for (const Example& ex : dev) {
      auto parses = predict_parses(model, ex, dc, 1);
      pred.emplace_back(ex.id, delinearize(parses.front().actions));
      ref.emplace_back(ex.id, delinearize(ex.parse_actions));
    }
    return evaluate_parse_task(pred, ref).labelled_f1;
  }
  double nll = 0;
  long long toks = 0;
  for (const Example& ex : dev) {
    Tape t;
    IndexedExample ix = index_example(ex, model.vocabs());
    LossOut lo = model.example_loss(t, ix, nullptr);
    nll += lo.parse_nll;
    toks += lo.parse_tokens;
  }
  return std::exp(nll / double(std::max<long long>(1, toks)));
}

TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus,
                  const Corpus& dev_corpus, std::ostream* log) {
  cfg.validate();
  if (train_corpus.empty()) throw CorpusError("training corpus is empty");
  if (dev_corpus.empty()) throw CorpusError("dev corpus is empty");

  VocabSet vocabs = build_vocabs(train_corpus);
  auto model = std::make_unique<Seq2SeqModel>(cfg.model_config(), vocabs,
                                              cfg.seed);
  if (!cfg.embedding_file.empty())
    load_pretrained_embeddings(*model, cfg.embedding_file);

  std::vector<IndexedExample> base;
  std::vector<NoisePlan> plans;
  base.reserve(train_corpus.size());
  plans.reserve(train_corpus.size());
  for (const Example& ex : train_corpus) {
    base.push_back(index_example(ex, vocabs));
    plans.push_back(make_noise_plan(base.back(), vocabs));
  }

  Adam opt;
  AdamConfig acfg;
  double lr = cfg.lr;

  TrainResult res;
  const bool lm = cfg.task == Task::kUnconditionalLm;
  res.best_metric = lm ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
  std::vector<Mat> best_params;
  int since_improve = 0;

  std::vector<std::size_t> order(base.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::seed_seq eseed{cfg.seed, unsigned(epoch)};
    Rng erng(eseed);
    std::vector<IndexedExample> noisy = base;  // fresh noise every epoch
    for (std::size_t i = 0; i < noisy.size(); ++i)
      apply_unk_noise(noisy[i], plans[i], cfg, erng);
    std::shuffle(order.begin(), order.end(), erng);

    double total_nll = 0;
    long long total_tokens = 0;
    for (std::size_t start = 0; start < order.size();
         start += std::size_t(cfg.batch_size)) {
      std::size_t stop =
          std::min(order.size(), start + std::size_t(cfg.batch_size));
      model->params().zero_grads();
      for (std::size_t k = start; k < stop; ++k) {
        // Dropout noise depends only on (seed, epoch, example), not on the
        // batch layout, so trajectories are reproducible by construction.
        std::seed_seq dseed{cfg.seed, unsigned(epoch), unsigned(order[k]),
                            0xd509u};
        Rng drng(dseed);
        Tape t;
        LossOut lo;
        try {
          lo = model->example_loss(t, noisy[order[k]], &drng);
        } catch (const ModelError& err) {
          // Saturated softmax rows give gold tokens exactly zero probability
          // before the loss itself overflows; treat it as divergence.
          throw DivergenceError("training collapsed at epoch " +
                                std::to_string(epoch) + ": " + err.what());
        }
        double v = double(t.value(lo.total)(0, 0));
        if (!std::isfinite(v))
          throw DivergenceError("training loss is not finite at epoch " +
                                std::to_string(epoch));
        total_nll += v;
        total_tokens += lo.parse_tokens + lo.text_tokens;
        t.backward(lo.total);
      }
      clip_grad_norm(model->params(), Real(cfg.clip_norm));
      acfg.lr = lr;
      opt.step(model->params(), acfg);
    }

    double metric = 0;
    try {
      metric = dev_metric(*model, dev_corpus);
    } catch (const ModelError& err) {
      throw DivergenceError("dev evaluation failed at epoch " +
                            std::to_string(epoch) + ": " + err.what());
    }
    EpochLog el;
    el.epoch = epoch;
    el.train_nll =
        total_tokens ? total_nll / double(total_tokens) : total_nll;
    el.dev_metric = metric;
    el.lr = lr;
    res.history.push_back(el);
    if (log) {
      ordered_json j;
      j["epoch"] = el.epoch;
      j["train_nll"] = el.train_nll;
      j["dev_metric"] = el.dev_metric;
      j["lr"] = el.lr;
      *log << j.dump() << "\n" << std::flush;
    }

    if (dev_metric_improved(cfg.task, metric, res.best_metric)) {
      res.best_metric = metric;
      res.best_epoch = epoch;
      best_params.clear();
      for (Parameter* p : model->params().all()) best_params.push_back(p->value);
      since_improve = 0;
    } else if (++since_improve >= cfg.patience) {
      lr *= cfg.lr_decay;
      since_improve = 0;
    }
  }

  if (!best_params.empty()) {
    auto all = model->params().all();
    for (std::size_t i = 0; i < all.size(); ++i)
      all[i]->value = best_params[i];
  }
  res.model = std::move(model);
  return res;
}

void load_pretrained_embeddings(Seq2SeqModel& model, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file '" + path + "'");
  Parameter* word = model.params().find("word_emb");
  Parameter* amr = model.params().find("amr_emb");
  const Eigen::Index e = model.config().emb;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    std::vector<Real> vals;
    double v = 0;
    while (ls >> v) vals.push_back(Real(v));
    if (Eigen::Index(vals.size()) != e)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(e) + " values for '" + tok + "', got " +
                        std::to_string(vals.size()));
    auto apply = [&](Parameter* table, const Vocab& vocab) {
      if (!table || !vocab.contains(tok)) return;
      Eigen::Index row = vocab.get(tok);
      for (Eigen::Index j = 0; j < e; ++j) table->value(row, j) = vals[std::size_t(j)];
    };
    apply(word, model.vocabs().word);
    apply(amr, model.vocabs().amr);
  }
}

void save_checkpoint(const std::string& path, const Seq2SeqModel& model,
                     const TrainConfig& cfg, int epoch,
                     const std::vector<double>& dev_history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out.write("AMRF", 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, std::uint32_t(sizeof(Real)));
  auto params = model.params().all();
  write_u32(out, std::uint32_t(params.size()));
  for (const Parameter* p : params) {
    write_u32(out, std::uint32_t(p->name.size()));
    out.write(p->name.data(), std::streamsize(p->name.size()));
    write_u32(out, std::uint32_t(p->rows()));
    write_u32(out, std::uint32_t(p->cols()));
    for (Eigen::Index r = 0; r < p->rows(); ++r)
      for (Eigen::Index c = 0; c < p->cols(); ++c) {
        Real x = p->value(r, c);
        out.write(reinterpret_cast<const char*>(&x), sizeof(Real));
      }
  }
  ordered_json meta;
  meta["config"] = config_json(cfg);
  meta["vocabs"] = {{"amr", vocab_json(model.vocabs().amr)},
                    {"action", vocab_json(model.vocabs().action)},
                    {"word", vocab_json(model.vocabs().word)},
                    {"pos", vocab_json(model.vocabs().pos)}};
  meta["epoch"] = epoch;
  meta["dev_history"] = dev_history;
  std::string blob = meta.dump();
  write_u32(out, std::uint32_t(blob.size()));
  out.write(blob.data(), std::streamsize(blob.size()));
  if (!out) throw CorpusError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open checkpoint '" + path + "'");
  if (read_bytes(in, 4) != "AMRF")
    throw CorpusError("'" + path + "' is not a checkpoint (bad magic)");
  std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw CorpusError("unsupported checkpoint version " +
                      std::to_string(version));
  std::uint32_t scalar = read_u32(in);
  if (scalar != sizeof(Real))
    throw CorpusError("checkpoint scalar width " + std::to_string(scalar) +
                      " does not match this build (" +
                      std::to_string(sizeof(Real)) + ")");
  std::uint32_t n_tensors = read_u32(in);
  std::map<std::string, Mat> tensors;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_bytes(in, read_u32(in));
    std::uint32_t rows = read_u32(in);
    std::uint32_t cols = read_u32(in);
    Mat m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        Real x = 0;
        in.read(reinterpret_cast<char*>(&x), sizeof(Real));
        if (!in) throw CorpusError("checkpoint truncated");
        m(r, c) = x;
      }
    if (!tensors.emplace(std::move(name), std::move(m)).second)
      throw CorpusError("duplicate tensor in checkpoint");
  }
  std::string blob = read_bytes(in, read_u32(in));
  json meta;
  try {
    meta = json::parse(blob);
  } catch (const json::exception& err) {
    throw CorpusError("corrupt checkpoint metadata: " +
                      std::string(err.what()));
  }

  Checkpoint ck;
  try {
    ck.config = config_from_json(meta.at("config"));
    ck.epoch = meta.at("epoch").get<int>();
    ck.dev_history = meta.at("dev_history").get<std::vector<double>>();
    VocabSet vocabs;
    vocabs.amr = vocab_from_json(meta.at("vocabs").at("amr"));
    vocabs.action = vocab_from_json(meta.at("vocabs").at("action"));
    vocabs.word = vocab_from_json(meta.at("vocabs").at("word"));
    vocabs.pos = vocab_from_json(meta.at("vocabs").at("pos"));
    ck.model = std::make_unique<Seq2SeqModel>(ck.config.model_config(), vocabs,
                                              ck.config.seed);
  } catch (const json::exception& err) {
    throw CorpusError("corrupt checkpoint metadata: " +
                      std::string(err.what()));
  }

  auto params = ck.model->params().all();
  if (params.size() != tensors.size())
    throw CorpusError("checkpoint has " + std::to_string(tensors.size()) +
                      " tensors, model expects " +
                      std::to_string(params.size()));
  for (Parameter* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end())
      throw CorpusError("checkpoint missing tensor '" + p->name + "'");
    if (it->second.rows() != p->rows() || it->second.cols() != p->cols())
      throw CorpusError("checkpoint tensor '" + p->name +
                        "' has the wrong shape");
    p->value = it->second;
  }
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, Task expected) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.config.task != expected)
    throw ConfigError("checkpoint '" + path + "' was trained for task '" +
                      task_name(ck.config.task) + "', expected '" +
                      task_name(expected) + "'");
  return ck;
}

}  // namespace amrgen
