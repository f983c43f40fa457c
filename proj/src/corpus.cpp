#include "amrgen/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "amrgen/penman.hpp"

namespace amrgen {
namespace {

std::string lower_ascii(std::string s) {
  for (char& c : s) c = (char)std::tolower((unsigned char)c);
  return s;
}

std::vector<std::string> terminal_labels(const ActionSequence& seq) {
  std::vector<std::string> out;
  for (const Action& a : seq)
    if (a.kind == Action::kTerminal) out.push_back(a.label);
  return out;
}

void validate_example(const Example& e, const std::string& where) {
  try {
    delinearize(e.parse_actions);
  } catch (const TreeError& err) {
    throw CorpusError(where + ": invalid parse_actions: " + err.what());
  }
  if (terminal_labels(e.parse_actions) != e.pos_tags)
    throw CorpusError(where + ": pos_tags disagree with parse_actions");
  if (e.words.size() != e.pos_tags.size())
    throw CorpusError(where + ": " + std::to_string(e.words.size()) +
                      " words for " + std::to_string(e.pos_tags.size()) +
                      " terminals");
}

}  // namespace

Vocab vocab_from_counts(const std::map<std::string, long long>& counts) {
  Vocab v;
  std::vector<std::pair<std::string, long long>> items(counts.begin(),
                                                       counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, n] : items) {
    v.add(tok);
    v.counts[tok] = n;
  }
  return v;
}

Corpus preprocess(const std::string& amr_text, const std::string& ptb_text) {
  std::vector<AmrEntry> entries = read_amr_blocks(amr_text);

  std::vector<std::pair<int, std::string>> parse_lines;  // (line number, text)
  {
    std::istringstream in(ptb_text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      parse_lines.emplace_back(lineno, line);
    }
  }

  if (entries.size() != parse_lines.size()) {
    std::string first;
    if (entries.size() > parse_lines.size()) {
      const AmrEntry& e = entries[parse_lines.size()];
      first = e.id.empty() ? "#" + std::to_string(parse_lines.size()) : e.id;
      first = "AMR block '" + first + "' has no parse";
    } else {
      first = "parse line " +
              std::to_string(parse_lines[entries.size()].first) +
              " has no AMR block";
    }
    throw CorpusError("example count mismatch: " +
                      std::to_string(entries.size()) + " AMR blocks vs " +
                      std::to_string(parse_lines.size()) + " parses; " + first);
  }

  Corpus corpus;
  corpus.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Example ex;
    ex.id = entries[i].id.empty() ? std::to_string(i) : entries[i].id;
    try {
      AmrGraph g = parse_penman(entries[i].penman);
      AnonymizeResult an = anonymize(g);
      LinearizedAmr lin = linearize(an.graph, an.table);
      ex.amr_tokens = std::move(lin.tokens);
      ex.anon_table = std::move(lin.anon_table);

      ConstituencyTree tree = parse_ptb(parse_lines[i].second);
      auto [delex, words] = delexicalise(tree);
      ex.parse_actions = linearize_tree(delex);
      ex.pos_tags = terminal_labels(ex.parse_actions);
      ex.words.reserve(words.size());
      for (std::string& w : words)
        ex.words.push_back(is_anon_placeholder(w) ? w : lower_ascii(w));
    } catch (const PenmanError& err) {
      throw CorpusError("example '" + ex.id + "': " + err.what());
    } catch (const TreeError& err) {
      throw CorpusError("example '" + ex.id + "' (parse line " +
                        std::to_string(parse_lines[i].first) +
                        "): " + err.what());
    }
    validate_example(ex, "example '" + ex.id + "'");
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

Corpus load_jsonl(std::istream& in, const std::string& source_name) {
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = source_name + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& err) {
      throw CorpusError(where + ": " + err.what());
    }
    Example ex;
    try {
      ex.id = j.at("id").get<std::string>();
      ex.amr_tokens = j.at("amr_tokens").get<std::vector<std::string>>();
      if (j.contains("anon_table"))
        ex.anon_table =
            j.at("anon_table").get<std::map<std::string, std::string>>();
      for (const auto& tok :
           j.at("parse_actions").get<std::vector<std::string>>())
        ex.parse_actions.push_back(action_from_token(tok));
      ex.pos_tags = j.at("pos_tags").get<std::vector<std::string>>();
      ex.words = j.at("words").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& err) {
      throw CorpusError(where + ": " + err.what());
    } catch (const TreeError& err) {
      throw CorpusError(where + ": " + err.what());
    }
    validate_example(ex, where + " (example '" + ex.id + "')");
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

Corpus load_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  return load_jsonl(in, path);
}

void save_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const Example& ex : corpus) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["amr_tokens"] = ex.amr_tokens;
    j["anon_table"] = ex.anon_table;
    std::vector<std::string> actions;
    actions.reserve(ex.parse_actions.size());
    for (const Action& a : ex.parse_actions) actions.push_back(action_token(a));
    j["parse_actions"] = actions;
    j["pos_tags"] = ex.pos_tags;
    j["words"] = ex.words;
    out << j.dump() << '\n';
  }
}

void save_jsonl_file(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file: " + path);
  save_jsonl(out, corpus);
  if (!out) throw CorpusError("write failed: " + path);
}

VocabSet build_vocabs(const Corpus& train) {
  if (train.empty())
    throw ConfigError("cannot build vocabularies from an empty corpus");
  std::map<std::string, long long> amr, act, word, pos;
  for (const Example& ex : train) {
    for (const auto& t : ex.amr_tokens) ++amr[t];
    for (const Action& a : ex.parse_actions) ++act[action_token(a)];
    for (const auto& w : ex.words) ++word[w];
    for (const auto& p : ex.pos_tags) ++pos[p];
  }
  VocabSet v;
  v.amr = vocab_from_counts(amr);
  v.action = vocab_from_counts(act);
  v.word = vocab_from_counts(word);
  v.pos = vocab_from_counts(pos);
  return v;
}

PreprocessStats corpus_stats(const Corpus& corpus, const VocabSet& vocabs) {
  PreprocessStats s;
  s.n_examples = (int)corpus.size();
  s.amr_vocab = vocabs.amr.size();
  s.action_vocab = vocabs.action.size();
  s.word_vocab = vocabs.word.size();
  s.pos_vocab = vocabs.pos.size();
  for (const auto& [tok, n] : vocabs.word.counts)
    if (n == 1) ++s.word_singletons;
  int word_types = vocabs.word.size() - 4;  // reserved rows carry no counts
  s.singleton_fraction =
      word_types > 0 ? (double)s.word_singletons / word_types : 0.0;
  long long total_actions = 0;
  for (const Example& ex : corpus) {
    s.max_actions = std::max(s.max_actions, (int)ex.parse_actions.size());
    total_actions += (long long)ex.parse_actions.size();
  }
  s.mean_actions =
      corpus.empty() ? 0.0 : (double)total_actions / (double)corpus.size();
  return s;
}

}  // namespace amrgen
