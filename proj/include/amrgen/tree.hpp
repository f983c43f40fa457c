#pragma once

// Penn-treebank constituency trees and their depth-first action encoding:
// a delexicalised tree becomes a sequence of open / terminal / close moves,
// and an ActionAutomaton tracks which moves stay grammatical while a parse
// is generated left to right (the decoder masks everything else out).

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace amrgen {

class TreeError : public std::runtime_error {
 public:
  explicit TreeError(const std::string& what) : std::runtime_error(what) {}
};

// Lexicalised trees (straight from parse_ptb) carry the surface words as
// `is_word` leaves under their POS preterminals; delexicalised trees end at
// the POS tags.
struct ConstituencyTree {
  std::string label;
  bool is_word = false;
  std::vector<ConstituencyTree> children;

  bool leaf() const { return children.empty(); }
  bool operator==(const ConstituencyTree&) const = default;
};

// Bracketed parse -> lexicalised tree.  The PTB outer wrapper (`((S ...))`,
// `(ROOT ...)`, `(TOP ...)`) is unwrapped, functional tags (`NP-SBJ`,
// `WHNP=1`) are stripped, and `-NONE-` traces removed together with any
// constituent left empty.  Throws TreeError with a position on malformed
// input.
ConstituencyTree parse_ptb(const std::string& text);

std::string print_tree(const ConstituencyTree& t);

// Removes the word leaves; returns the delexicalised tree plus the words in
// left-to-right order (the lexicalisation model's target side).
std::pair<ConstituencyTree, std::vector<std::string>> delexicalise(
    const ConstituencyTree& t);

struct Action {
  enum Kind { kOpen, kTerminal, kClose } kind = kClose;
  std::string label;  // nonterminal for kOpen, POS tag for kTerminal

  static Action open(std::string l) { return {kOpen, std::move(l)}; }
  static Action terminal(std::string l) { return {kTerminal, std::move(l)}; }
  static Action close() { return {kClose, {}}; }

  bool operator==(const Action&) const = default;
};

using ActionSequence = std::vector<Action>;

// The strings that enter the action vocabulary: "(S", "NN", ")".
std::string action_token(const Action& a);
Action action_from_token(const std::string& token);

// Depth-first traversal: open at each internal node, terminal at each POS
// leaf, close on exit.  A bare single-leaf tree is wrapped in a root `X`
// so every sequence begins with an open.
ActionSequence linearize_tree(const ConstituencyTree& t);

// Inverse of linearize_tree; throws TreeError on unbalanced sequences and
// on constituents closed with no children.
ConstituencyTree delinearize(const ActionSequence& seq);

// Hard caps that guarantee decoder termination: once `kMaxActions` moves
// have been taken only closes (plus a filler terminal where a constituent
// would close empty) remain permissible, so any rollout finishes within
// kMaxActions + 2 * kMaxOpenDepth moves.
inline constexpr int kMaxOpenDepth = 40;
inline constexpr int kMaxActions = 512;

struct ActionMask {
  bool open = false;
  bool terminal = false;
  bool close = false;
};

class ActionAutomaton {
 public:
  explicit ActionAutomaton(int max_depth = kMaxOpenDepth,
                           int max_actions = kMaxActions);

  // Which of the three kinds may come next (any label of a permitted kind).
  // The set is never empty; querying a finished automaton is a usage error.
  ActionMask permissible() const;
  bool permits(const Action& a) const;
  void apply(const Action& a);  // throws TreeError if not permitted

  bool finished() const { return finished_; }
  int depth() const { return (int)child_counts_.size(); }
  int steps() const { return steps_; }

 private:
  std::vector<int> child_counts_;  // children so far of each open constituent
  int steps_ = 0;
  bool finished_ = false;
  int max_depth_;
  int max_actions_;
};

}  // namespace amrgen
