#pragma once

// Dataset plumbing: paired AMR/tree files -> preprocessed examples -> JSONL.

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "amrgen/tree.hpp"
#include "amrgen/vocab.hpp"

namespace amrgen {

// Malformed or inconsistent input data (maps to exit code 2 in the CLI).
class CorpusError : public std::runtime_error {
 public:
  explicit CorpusError(const std::string& what) : std::runtime_error(what) {}
};

// Bad invocation or configuration (maps to exit code 1 in the CLI).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct Example {
  std::string id;
  std::vector<std::string> amr_tokens;              // linearized, anonymized
  std::map<std::string, std::string> anon_table;    // placeholder -> surface
  ActionSequence parse_actions;                     // delexicalized tree
  std::vector<std::string> pos_tags;                // terminal labels in order
  std::vector<std::string> words;                   // surface words in order

  bool operator==(const Example&) const = default;
};

using Corpus = std::vector<Example>;

// Strictly aligned AMR blocks and one-tree-per-line PTB text.  Counts must
// match; the first block whose partner is missing aborts the run.
Corpus preprocess(const std::string& amr_text, const std::string& ptb_text);

Corpus load_jsonl(std::istream& in, const std::string& source_name = "<stream>");
Corpus load_jsonl_file(const std::string& path);
void save_jsonl(std::ostream& out, const Corpus& corpus);
void save_jsonl_file(const std::string& path, const Corpus& corpus);

VocabSet build_vocabs(const Corpus& train);

struct PreprocessStats {
  int n_examples = 0;
  int amr_vocab = 0;
  int action_vocab = 0;
  int word_vocab = 0;
  int pos_vocab = 0;
  int word_singletons = 0;        // surface words with training count 1
  double singleton_fraction = 0;  // singletons / word types (excl. reserved)
  int max_actions = 0;
  double mean_actions = 0;
};

PreprocessStats corpus_stats(const Corpus& corpus, const VocabSet& vocabs);

}  // namespace amrgen
