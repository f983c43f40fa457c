#include "amrgen/tree.hpp"

#include <cctype>

namespace amrgen {

namespace {

std::string pos_str(int line, int col) {
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

struct PtbToken {
  enum Kind { kLParen, kRParen, kAtom, kEnd } kind;
  std::string text;
  int line = 1;
  int col = 1;
};

class PtbLexer {
 public:
  explicit PtbLexer(const std::string& text) : text_(text) {}

  PtbToken next() {
    while (pos_ < text_.size() && std::isspace((unsigned char)text_[pos_]))
      advance();
    PtbToken t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= text_.size()) {
      t.kind = PtbToken::kEnd;
      return t;
    }
    char c = text_[pos_];
    if (c == '(' || c == ')') {
      advance();
      t.kind = c == '(' ? PtbToken::kLParen : PtbToken::kRParen;
      t.text = c;
      return t;
    }
    while (pos_ < text_.size()) {
      char a = text_[pos_];
      if (std::isspace((unsigned char)a) || a == '(' || a == ')') break;
      t.text += a;
      advance();
    }
    t.kind = PtbToken::kAtom;
    return t;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class PtbParser {
 public:
  explicit PtbParser(const std::string& text) : lex_(text) {
    cur_ = lex_.next();
  }

  ConstituencyTree parse() {
    if (cur_.kind != PtbToken::kLParen)
      throw TreeError("expected '(' at " + pos_str(cur_.line, cur_.col));
    ConstituencyTree t = parse_node();
    if (cur_.kind != PtbToken::kEnd)
      throw TreeError("trailing input after parse at " +
                      pos_str(cur_.line, cur_.col));
    // unwrap the PTB file wrapper: a label-less or ROOT/TOP node with one
    // constituent child
    while (t.children.size() == 1 && !t.children[0].is_word &&
           (t.label.empty() || t.label == "ROOT" || t.label == "TOP"))
      t = std::move(t.children[0]);
    if (t.label.empty())
      throw TreeError("wrapper node with " +
                      std::to_string(t.children.size()) + " children");
    if (!clean(t)) throw TreeError("parse is empty after removing traces");
    return t;
  }

 private:
  PtbToken eat() {
    PtbToken t = cur_;
    cur_ = lex_.next();
    return t;
  }

  ConstituencyTree parse_node() {
    PtbToken open = eat();  // '('
    ConstituencyTree t;
    if (cur_.kind == PtbToken::kAtom) t.label = eat().text;
    while (cur_.kind == PtbToken::kLParen || cur_.kind == PtbToken::kAtom) {
      if (cur_.kind == PtbToken::kLParen) {
        t.children.push_back(parse_node());
      } else {
        ConstituencyTree word;
        word.label = eat().text;
        word.is_word = true;
        t.children.push_back(std::move(word));
      }
    }
    if (cur_.kind == PtbToken::kEnd)
      throw TreeError("unbalanced parentheses: '(' at " +
                      pos_str(open.line, open.col) + " is never closed");
    eat();  // ')'
    if (t.children.empty())
      throw TreeError("empty constituent at " +
                      pos_str(open.line, open.col));
    return t;
  }

  // Strips functional tags, drops -NONE- traces and anything left empty.
  // Returns false if the subtree vanishes entirely.
  static bool clean(ConstituencyTree& t) {
    if (t.is_word) return true;
    if (t.label == "-NONE-") return false;
    if (!t.label.empty() && t.label[0] != '-') {
      size_t cut = t.label.find_first_of("-=");
      if (cut != std::string::npos && cut > 0) t.label.erase(cut);
    }
    std::vector<ConstituencyTree> kept;
    for (ConstituencyTree& c : t.children)
      if (clean(c)) kept.push_back(std::move(c));
    t.children = std::move(kept);
    return !t.children.empty();
  }

  PtbLexer lex_;
  PtbToken cur_;
};

void delex_walk(const ConstituencyTree& t, ConstituencyTree& out,
                std::vector<std::string>& words) {
  out.label = t.label;
  for (const ConstituencyTree& c : t.children) {
    if (c.is_word) {
      words.push_back(c.label);
      continue;
    }
    ConstituencyTree child;
    delex_walk(c, child, words);
    out.children.push_back(std::move(child));
  }
}

void lin_walk(const ConstituencyTree& t, ActionSequence& out) {
  if (t.is_word)
    throw TreeError("linearize_tree expects a delexicalised tree");
  if (t.leaf()) {
    out.push_back(Action::terminal(t.label));
    return;
  }
  out.push_back(Action::open(t.label));
  for (const ConstituencyTree& c : t.children) lin_walk(c, out);
  out.push_back(Action::close());
}

}  // namespace

ConstituencyTree parse_ptb(const std::string& text) {
  return PtbParser(text).parse();
}

std::string print_tree(const ConstituencyTree& t) {
  if (t.leaf()) return t.label;
  std::string s = "(" + t.label;
  for (const ConstituencyTree& c : t.children) s += " " + print_tree(c);
  return s + ")";
}

std::pair<ConstituencyTree, std::vector<std::string>> delexicalise(
    const ConstituencyTree& t) {
  std::pair<ConstituencyTree, std::vector<std::string>> res;
  delex_walk(t, res.first, res.second);
  return res;
}

std::string action_token(const Action& a) {
  switch (a.kind) {
    case Action::kOpen:
      return "(" + a.label;
    case Action::kTerminal:
      return a.label;
    case Action::kClose:
      return ")";
  }
  return ")";
}

Action action_from_token(const std::string& token) {
  if (token == ")") return Action::close();
  if (!token.empty() && token[0] == '(') return Action::open(token.substr(1));
  return Action::terminal(token);
}

ActionSequence linearize_tree(const ConstituencyTree& t) {
  ActionSequence out;
  if (t.leaf()) {
    out.push_back(Action::open("X"));
    out.push_back(Action::terminal(t.label));
    out.push_back(Action::close());
    return out;
  }
  lin_walk(t, out);
  return out;
}

ConstituencyTree delinearize(const ActionSequence& seq) {
  if (seq.empty()) throw TreeError("empty action sequence");
  std::vector<ConstituencyTree> stack;
  ConstituencyTree done;
  bool have_done = false;
  for (const Action& a : seq) {
    if (have_done)
      throw TreeError("actions after the root constituent closed");
    switch (a.kind) {
      case Action::kOpen:
        stack.push_back(ConstituencyTree{a.label});
        break;
      case Action::kTerminal:
        if (stack.empty())
          throw TreeError("terminal before any open constituent");
        stack.back().children.push_back(ConstituencyTree{a.label});
        break;
      case Action::kClose: {
        if (stack.empty()) throw TreeError("close without a matching open");
        if (stack.back().children.empty())
          throw TreeError("constituent '" + stack.back().label +
                          "' closed with no children");
        ConstituencyTree t = std::move(stack.back());
        stack.pop_back();
        if (stack.empty()) {
          done = std::move(t);
          have_done = true;
        } else {
          stack.back().children.push_back(std::move(t));
        }
        break;
      }
    }
  }
  if (!have_done)
    throw TreeError("unbalanced action sequence: " +
                    std::to_string(stack.size()) + " constituents left open");
  return done;
}

ActionAutomaton::ActionAutomaton(int max_depth, int max_actions)
    : max_depth_(max_depth), max_actions_(max_actions) {}

ActionMask ActionAutomaton::permissible() const {
  if (finished_) throw TreeError("automaton already finished");
  ActionMask m;
  bool top_empty = !child_counts_.empty() && child_counts_.back() == 0;
  m.close = !child_counts_.empty() && !top_empty;
  if (steps_ >= max_actions_) {
    // length cap: close everything out, with one filler terminal wherever a
    // constituent would otherwise close empty
    m.terminal = top_empty;
    return m;
  }
  if (child_counts_.empty()) {
    m.open = steps_ == 0;
  } else {
    m.open = (int)child_counts_.size() < max_depth_;
    m.terminal = true;
  }
  return m;
}

bool ActionAutomaton::permits(const Action& a) const {
  ActionMask m = permissible();
  switch (a.kind) {
    case Action::kOpen:
      return m.open;
    case Action::kTerminal:
      return m.terminal;
    case Action::kClose:
      return m.close;
  }
  return false;
}

void ActionAutomaton::apply(const Action& a) {
  if (!permits(a))
    throw TreeError("action '" + action_token(a) + "' not permissible here");
  switch (a.kind) {
    case Action::kOpen:
      if (!child_counts_.empty()) ++child_counts_.back();
      child_counts_.push_back(0);
      break;
    case Action::kTerminal:
      ++child_counts_.back();
      break;
    case Action::kClose:
      child_counts_.pop_back();
      if (child_counts_.empty()) finished_ = true;
      break;
  }
  ++steps_;
}

}  // namespace amrgen
