// Command-line pipeline: preprocess, train, generate, sample, evaluate.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "amrgen/decode.hpp"
#include "amrgen/metrics.hpp"
#include "amrgen/penman.hpp"
#include "amrgen/trainer.hpp"

using namespace amrgen;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> action_token_list(const ActionSequence& seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (const Action& a : seq) out.push_back(action_token(a));
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
  std::string amr_path, ptb_path, out_path;
};

void run_preprocess(const PreprocessArgs& a) {
  Corpus corpus = preprocess(slurp(a.amr_path), slurp(a.ptb_path));
  save_jsonl_file(a.out_path, corpus);
  VocabSet vocabs = build_vocabs(corpus);
  PreprocessStats st = corpus_stats(corpus, vocabs);
  std::cout << "examples            " << st.n_examples << "\n"
            << "amr vocab           " << st.amr_vocab << "\n"
            << "action vocab        " << st.action_vocab << "\n"
            << "word vocab          " << st.word_vocab << "\n"
            << "pos vocab           " << st.pos_vocab << "\n"
            << "word singletons     " << st.word_singletons << " ("
            << st.singleton_fraction << " of word types)\n"
            << "action length max   " << st.max_actions << "\n"
            << "action length mean  " << st.mean_actions << "\n"
            << "wrote " << a.out_path << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config_path, train_path, dev_path, out_path, log_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void run_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw ConfigError("cannot open config '" + a.config_path + "'");
    apply_config_text(cfg, in, a.config_path);
  }
  for (const auto& [key, value] : a.overrides) apply_config_kv(cfg, key, value);
  cfg.validate();

  Corpus train_corpus = load_jsonl_file(a.train_path);
  Corpus dev_corpus = load_jsonl_file(a.dev_path);

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log_path.empty()) {
    log_file = open_out(a.log_path);
    log = &log_file;
  }

  TrainResult res = train(cfg, train_corpus, dev_corpus, log);
  std::vector<double> history;
  for (const EpochLog& el : res.history) history.push_back(el.dev_metric);
  save_checkpoint(a.out_path, *res.model, cfg, res.best_epoch, history);
  std::cout << "best epoch " << res.best_epoch << " dev "
            << dev_metric_name(cfg.task) << " " << res.best_metric << "\n"
            << "wrote " << a.out_path << "\n";
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string ckpt_path, input_path, out_path, oracle_path;
  int beam_width = 2;
  int n_parses = 2;
  bool length_normalize = false;
  bool verbose = false;
};

void run_generate(const GenerateArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt_path);
  const Task task = ck.config.task;
  Corpus corpus = load_jsonl_file(a.input_path);
  DecodeConfig dc;
  dc.beam_width = a.beam_width;
  dc.n_parses = a.n_parses;
  dc.length_normalize = a.length_normalize;

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!a.out_path.empty()) {
    out_file = open_out(a.out_path);
    out = &out_file;
  }

  if (!a.oracle_path.empty()) {
    if (task != Task::kJoint)
      throw ConfigError("--oracle-parse needs a joint checkpoint, got task '" +
                        std::string(task_name(task)) + "'");
    std::map<std::string, ActionSequence> oracle;
    for (const Example& ex : load_jsonl_file(a.oracle_path))
      oracle[ex.id] = ex.parse_actions;
    for (const Example& ex : corpus) {
      auto it = oracle.find(ex.id);
      if (it == oracle.end())
        throw CorpusError("no oracle parse for example '" + ex.id + "'");
      Example with_gold = ex;
      with_gold.parse_actions = it->second;
      double lex = 0;
      auto text = generate_with_oracle_parse(*ck.model, with_gold, dc, &lex);
      ordered_json j;
      j["id"] = ex.id;
      j["text"] = join(text);
      j["parse"] = action_token_list(it->second);
      j["lex_score"] = lex;
      *out << j.dump() << "\n";
    }
    return;
  }

  if (task != Task::kJoint && task != Task::kBaselineS2sCopy)
    throw ConfigError("checkpoint task '" + std::string(task_name(task)) +
                      "' does not generate text");
  for (const Example& ex : corpus) {
    GenerateResult g = generate(*ck.model, ex, dc);
    const RealisationCandidate& best = g.best();
    ordered_json j;
    j["id"] = ex.id;
    j["text"] = join(best.text);
    if (task == Task::kJoint) j["parse"] = best.parse_tokens;
    j["joint_score"] = best.joint_score();
    ordered_json cands = ordered_json::array();
    for (const RealisationCandidate& c : g.candidates) {
      ordered_json cj;
      if (task == Task::kJoint) cj["parse"] = c.parse_tokens;
      cj["text"] = join(c.text);
      cj["syn_score"] = c.syn_score;
      cj["lex_score"] = c.lex_score;
      cands.push_back(std::move(cj));
    }
    j["candidates"] = std::move(cands);
    if (a.verbose) {
      // Diagnostic only: log-sum-exp over candidate joint scores, an
      // approximation of the candidate-marginal likelihood.
      double m = -std::numeric_limits<double>::infinity();
      for (const auto& c : g.candidates) m = std::max(m, c.joint_score());
      double z = 0;
      for (const auto& c : g.candidates) z += std::exp(c.joint_score() - m);
      j["marginal_score"] = m + std::log(z);
    }
    *out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string ckpt_path, input_path, out_path;
  double temperature = 0.3;
  int num_samples = 3;
  unsigned seed = 1;
};

void run_sample(const SampleArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt_path);
  const Task task = ck.config.task;
  if (task != Task::kJoint && task != Task::kBaselineS2sCopy)
    throw ConfigError("checkpoint task '" + std::string(task_name(task)) +
                      "' does not generate text");
  Corpus corpus = load_jsonl_file(a.input_path);
  DecodeConfig dc;
  dc.temperature = Real(a.temperature);
  dc.num_samples = a.num_samples;

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!a.out_path.empty()) {
    out_file = open_out(a.out_path);
    out = &out_file;
  }

  Rng rng(a.seed);
  for (const Example& ex : corpus) {
    ordered_json j;
    j["id"] = ex.id;
    ordered_json samples = ordered_json::array();
    int duplicates = 0;
    if (task == Task::kJoint) {
      SampleResult res = sample_diverse(*ck.model, ex, dc, rng);
      duplicates = res.duplicates;
      for (const DiverseSample& s : res.samples) {
        ordered_json sj;
        sj["parse"] = action_token_list(s.parse);
        sj["text"] = join(s.text);
        samples.push_back(std::move(sj));
      }
    } else {
      auto texts = sample_baseline(*ck.model, ex, dc, rng);
      std::vector<std::string> seen;
      for (const auto& toks : texts) {
        std::string t = join(toks);
        duplicates += std::count(seen.begin(), seen.end(), t) > 0;
        seen.push_back(t);
        ordered_json sj;
        sj["text"] = std::move(t);
        samples.push_back(std::move(sj));
      }
    }
    j["samples"] = std::move(samples);
    j["duplicates"] = duplicates;
    *out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string metric = "bleu";
  std::string hyp_path, ref_path;
};

// Accepts either preprocessed corpus lines (words + anon_table,
// parse_actions) or generation output lines (text, parse).
struct EvalEntry {
  std::string id;
  std::vector<std::string> text;
  ActionSequence parse;
  bool has_parse = false;
};

std::vector<EvalEntry> load_eval_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<EvalEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& err) {
      throw CorpusError(path + ":" + std::to_string(lineno) + ": " +
                        err.what());
    }
    EvalEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      if (j.contains("text")) {
        e.text = split_ws(j.at("text").get<std::string>());
      } else if (j.contains("words")) {
        std::map<std::string, std::string> table;
        if (j.contains("anon_table"))
          table = j.at("anon_table")
                      .get<std::map<std::string, std::string>>();
        e.text = deanonymize(j.at("words").get<std::vector<std::string>>(),
                             table)
                     .tokens;
      }
      const char* parse_key = j.contains("parse")          ? "parse"
                              : j.contains("parse_actions") ? "parse_actions"
                                                            : nullptr;
      if (parse_key) {
        for (const auto& tok : j.at(parse_key))
          e.parse.push_back(action_from_token(tok.get<std::string>()));
        e.has_parse = true;
      }
    } catch (const json::exception& err) {
      throw CorpusError(path + ":" + std::to_string(lineno) + ": " +
                        err.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

void run_evaluate(const EvaluateArgs& a) {
  auto hyps = load_eval_file(a.hyp_path);
  auto refs = load_eval_file(a.ref_path);
  if (hyps.size() != refs.size())
    throw CorpusError("hypothesis and reference counts differ: " +
                      std::to_string(hyps.size()) + " vs " +
                      std::to_string(refs.size()));
  std::map<std::string, const EvalEntry*> by_id;
  for (const EvalEntry& r : refs)
    if (!by_id.emplace(r.id, &r).second)
      throw CorpusError("duplicate reference id '" + r.id + "'");

  ordered_json report;
  if (a.metric == "bleu") {
    std::vector<TokenSeq> h, r;
    for (const EvalEntry& e : hyps) {
      auto it = by_id.find(e.id);
      if (it == by_id.end())
        throw CorpusError("no reference for id '" + e.id + "'");
      h.push_back(e.text);
      r.push_back(it->second->text);
    }
    double bleu = corpus_bleu(h, r);
    report["metric"] = "bleu";
    report["bleu"] = bleu;
    report["n_examples"] = int(h.size());
    std::cerr << "BLEU " << bleu << " over " << h.size() << " examples\n";
  } else if (a.metric == "spanf1") {
    std::vector<std::pair<std::string, ConstituencyTree>> pred, ref;
    for (const EvalEntry& e : hyps) {
      auto it = by_id.find(e.id);
      if (it == by_id.end())
        throw CorpusError("no reference for id '" + e.id + "'");
      if (!e.has_parse || !it->second->has_parse)
        throw CorpusError("example '" + e.id + "' lacks a parse");
      pred.emplace_back(e.id, delinearize(e.parse));
      ref.emplace_back(e.id, delinearize(it->second->parse));
    }
    ParseEvalReport r = evaluate_parse_task(pred, ref);
    report["metric"] = "spanf1";
    report["labelled_precision"] = r.labelled_precision;
    report["labelled_recall"] = r.labelled_recall;
    report["labelled_f1"] = r.labelled_f1;
    report["unlabelled_precision"] = r.unlabelled_precision;
    report["unlabelled_recall"] = r.unlabelled_recall;
    report["unlabelled_f1"] = r.unlabelled_f1;
    report["n_examples"] = r.n_examples;
    std::cerr << "            P       R       F1\n";
    char buf[96];
    std::snprintf(buf, sizeof buf, "labelled    %-7.2f %-7.2f %-7.2f\n",
                  r.labelled_precision, r.labelled_recall, r.labelled_f1);
    std::cerr << buf;
    std::snprintf(buf, sizeof buf, "unlabelled  %-7.2f %-7.2f %-7.2f\n",
                  r.unlabelled_precision, r.unlabelled_recall,
                  r.unlabelled_f1);
    std::cerr << buf << "over " << r.n_examples << " examples\n";
  } else {
    throw ConfigError("unknown metric '" + a.metric +
                      "' (expected bleu or spanf1)");
  }
  std::cout << report.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage AMR-to-text generation toolkit"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker cap (processing is serial)");

  PreprocessArgs pre;
  auto* cmd_pre = app.add_subcommand(
      "preprocess", "Align an AMR file with a parse file into JSONL");
  cmd_pre->add_option("amr", pre.amr_path, "AMR blocks (# ::id / # ::snt)")
      ->required();
  cmd_pre->add_option("ptb", pre.ptb_path, "one parse per line")->required();
  cmd_pre->add_option("out", pre.out_path, "output JSONL path")->required();
  cmd_pre->callback([&] { run_preprocess(pre); });

  TrainArgs tr;
  auto* cmd_tr = app.add_subcommand("train", "Train a model");
  cmd_tr->add_option("--config", tr.config_path, "flat key-value config file");
  cmd_tr->add_option("--train", tr.train_path, "training JSONL")->required();
  cmd_tr->add_option("--dev", tr.dev_path, "dev JSONL")->required();
  cmd_tr->add_option("--out", tr.out_path, "checkpoint path")->required();
  cmd_tr->add_option("--log", tr.log_path, "epoch log JSONL (default stdout)");
  for (const char* key :
       {"task", "preset", "hidden", "emb", "enc_layers", "dec_layers",
        "dropout", "rec_dropout", "batch_size", "epochs", "lr", "lr_decay",
        "patience", "clip_norm", "unk_word_prob", "unk_tag_prob", "seed",
        "embeddings"}) {
    cmd_tr
        ->add_option_function<std::string>(
            "--" + std::string(key),
            [&tr, key](const std::string& v) {
              tr.overrides.emplace_back(key, v);
            },
            "overrides the config file")
        ->type_name("VAL");
  }
  cmd_tr->callback([&] {
    tr.overrides.emplace_back("threads", std::to_string(threads));
    run_train(tr);
  });

  GenerateArgs gen;
  auto* cmd_gen = app.add_subcommand("generate", "Decode text for a corpus");
  cmd_gen->add_option("--checkpoint", gen.ckpt_path, "model checkpoint")
      ->required();
  cmd_gen->add_option("--input", gen.input_path, "JSONL corpus")->required();
  cmd_gen->add_option("--out", gen.out_path, "output JSONL (default stdout)");
  cmd_gen->add_option("--beam-width", gen.beam_width, "beam width (2)");
  cmd_gen->add_option("--n-parses", gen.n_parses, "parses per input (2)");
  cmd_gen->add_option("--oracle-parse", gen.oracle_path,
                      "JSONL corpus supplying gold parses by id");
  cmd_gen->add_flag("--length-normalize", gen.length_normalize,
                    "rank final candidates by per-token score");
  cmd_gen->add_flag("--verbose", gen.verbose,
                    "include diagnostic marginal_score");
  cmd_gen->callback([&] { run_generate(gen); });

  SampleArgs sam;
  auto* cmd_sam = app.add_subcommand("sample", "Temperature-sample outputs");
  cmd_sam->add_option("--checkpoint", sam.ckpt_path, "model checkpoint")
      ->required();
  cmd_sam->add_option("--input", sam.input_path, "JSONL corpus")->required();
  cmd_sam->add_option("--out", sam.out_path, "output JSONL (default stdout)");
  cmd_sam->add_option("--temperature", sam.temperature, "softmax sharpening (0.3)");
  cmd_sam->add_option("--num-samples", sam.num_samples, "samples per input (3)");
  cmd_sam->add_option("--seed", sam.seed, "sampling seed");
  cmd_sam->callback([&] { run_sample(sam); });

  EvaluateArgs ev;
  auto* cmd_ev = app.add_subcommand("evaluate", "Score hypotheses against references");
  cmd_ev->add_option("--metric", ev.metric, "bleu or spanf1");
  cmd_ev->add_option("--hyp", ev.hyp_path, "hypothesis JSONL")->required();
  cmd_ev->add_option("--ref", ev.ref_path, "reference JSONL")->required();
  cmd_ev->callback([&] { run_evaluate(ev); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const PenmanError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TreeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MetricsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
