#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "amrgen/tree.hpp"

using namespace amrgen;

namespace {

std::string msg_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const TreeError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

int count_nodes(const ConstituencyTree& t) {
  int n = 1;
  for (const ConstituencyTree& c : t.children) n += count_nodes(c);
  return n;
}

int tree_depth(const ConstituencyTree& t) {
  int d = 0;
  for (const ConstituencyTree& c : t.children)
    d = std::max(d, tree_depth(c));
  return d + 1;
}

// random delexicalised tree for the round-trip property
ConstituencyTree random_tree(std::mt19937_64& rng, int depth_left) {
  static const char* kNt[] = {"S", "NP", "VP", "PP", "SBAR"};
  static const char* kPos[] = {"DT", "NN", "VBD", "IN", "JJ", "PRP"};
  std::uniform_int_distribution<int> coin(0, 99);
  if (depth_left == 0 || coin(rng) < 35) {
    return ConstituencyTree{kPos[coin(rng) % 6]};
  }
  ConstituencyTree t{kNt[coin(rng) % 5]};
  int fanout = 1 + coin(rng) % 4;
  for (int i = 0; i < fanout; ++i)
    t.children.push_back(random_tree(rng, depth_left - 1));
  return t;
}

}  // namespace

TEST_CASE("parse_ptb: nested sentence") {
  ConstituencyTree t = parse_ptb("(S (NP (PRP I)) (VP (VBD gave)))");
  CHECK(t.label == "S");
  REQUIRE(t.children.size() == 2);
  CHECK(t.children[0].label == "NP");
  CHECK(t.children[1].label == "VP");
  REQUIRE(t.children[0].children.size() == 1);
  const ConstituencyTree& prp = t.children[0].children[0];
  CHECK(prp.label == "PRP");
  REQUIRE(prp.children.size() == 1);
  CHECK(prp.children[0].label == "I");
  CHECK(prp.children[0].is_word);
  CHECK(print_tree(t) == "(S (NP (PRP I)) (VP (VBD gave)))");
}

TEST_CASE("parse_ptb: single preterminal") {
  ConstituencyTree t = parse_ptb("(NN dog)");
  CHECK(t.label == "NN");
  REQUIRE(t.children.size() == 1);
  CHECK(t.children[0].is_word);
  CHECK(t.children[0].label == "dog");
}

TEST_CASE("parse_ptb: file wrappers are unwrapped") {
  const char* forms[] = {
      "((S (NP (PRP I)) (VP (VBD gave))))",
      "( (S (NP (PRP I)) (VP (VBD gave))) )",
      "(ROOT (S (NP (PRP I)) (VP (VBD gave))))",
      "(TOP (S (NP (PRP I)) (VP (VBD gave))))",
  };
  for (const char* f : forms)
    CHECK(print_tree(parse_ptb(f)) == "(S (NP (PRP I)) (VP (VBD gave)))");
}

TEST_CASE("parse_ptb: functional tags stripped, traces removed") {
  ConstituencyTree t = parse_ptb(
      "(S (NP-SBJ (-NONE- *T*-1)) (NP-1 (NN dog)) (WHNP=2 (WP who)))");
  CHECK(print_tree(t) == "(S (NP (NN dog)) (WHNP (WP who)))");

  // bracket POS tags keep their leading dash
  ConstituencyTree b = parse_ptb("(S (-LRB- -LRB-) (NN dog) (-RRB- -RRB-))");
  CHECK(print_tree(b) == "(S (-LRB- -LRB-) (NN dog) (-RRB- -RRB-))");
}

TEST_CASE("parse_ptb errors carry positions") {
  std::string m = msg_of([] { parse_ptb("(S (NP (NN dog)"); });
  CHECK(contains(m, "unbalanced"));

  m = msg_of([] { parse_ptb("(S ())"); });
  CHECK(contains(m, "empty constituent"));
  CHECK(contains(m, "column 4"));

  m = msg_of([] { parse_ptb("(NN dog) junk"); });
  CHECK(contains(m, "trailing"));

  m = msg_of([] { parse_ptb("(S (-NONE- *))"); });
  CHECK(contains(m, "empty after removing traces"));
}

TEST_CASE("delexicalise removes words and reports them in order") {
  auto [t, words] = delexicalise(parse_ptb("(NP (DT the) (NN dog))"));
  CHECK(print_tree(t) == "(NP DT NN)");
  CHECK(words == std::vector<std::string>{"the", "dog"});

  auto [leaf, w2] = delexicalise(parse_ptb("(NN dog)"));
  CHECK(leaf.leaf());
  CHECK(leaf.label == "NN");
  CHECK(w2 == std::vector<std::string>{"dog"});
}

TEST_CASE("delexicalise preserves tree shape") {
  ConstituencyTree lex = parse_ptb(
      "(S (NP (DT the) (NN dog)) (VP (VBD ate) (NP (DT a) (NN bone))))");
  auto [delex, words] = delexicalise(lex);
  CHECK(count_nodes(delex) == count_nodes(lex) - (int)words.size());
  CHECK(tree_depth(delex) == tree_depth(lex) - 1);
  // terminal count of the output equals the word count
  int terminals = 0;
  ActionSequence seq = linearize_tree(delex);
  for (const Action& a : seq) terminals += a.kind == Action::kTerminal;
  CHECK(terminals == (int)words.size());
}

TEST_CASE("linearize_tree: flat noun phrase") {
  auto [t, words] = delexicalise(parse_ptb("(NP (DT the) (NN dog))"));
  ActionSequence seq = linearize_tree(t);
  ActionSequence expect = {Action::open("NP"), Action::terminal("DT"),
                           Action::terminal("NN"), Action::close()};
  CHECK(seq == expect);
  CHECK(action_token(seq[0]) == "(NP");
  CHECK(action_token(seq[1]) == "DT");
  CHECK(action_token(seq[3]) == ")");
}

TEST_CASE("linearize_tree: bare leaf is wrapped in X") {
  auto [leaf, words] = delexicalise(parse_ptb("(NN dog)"));
  ActionSequence seq = linearize_tree(leaf);
  ActionSequence expect = {Action::open("X"), Action::terminal("NN"),
                           Action::close()};
  CHECK(seq == expect);
}

TEST_CASE("linearize_tree: two-constituent sentence") {
  auto [t, words] = delexicalise(
      parse_ptb("(S (NP (DT the) (NN dog)) (VP (VBD slept)))"));
  ActionSequence seq = linearize_tree(t);
  ActionSequence expect = {
      Action::open("S"),      Action::open("NP"),  Action::terminal("DT"),
      Action::terminal("NN"), Action::close(),     Action::open("VP"),
      Action::terminal("VBD"), Action::close(),    Action::close()};
  CHECK(seq == expect);
}

TEST_CASE("delinearize inverts linearize_tree") {
  auto [t, words] = delexicalise(
      parse_ptb("(S (NP (DT the) (NN dog)) (VP (VBD slept)))"));
  ActionSequence seq = linearize_tree(t);
  CHECK(delinearize(seq) == t);
  CHECK(linearize_tree(delinearize(seq)) == seq);
}

TEST_CASE("delinearize rejects malformed sequences") {
  CHECK(contains(msg_of([] { delinearize({}); }), "empty action sequence"));
  CHECK(contains(
      msg_of([] { delinearize({Action::open("S"), Action::close()}); }),
      "no children"));
  CHECK(contains(
      msg_of([] { delinearize({Action::open("S"), Action::terminal("NN")}); }),
      "left open"));
  CHECK(contains(msg_of([] { delinearize({Action::terminal("NN")}); }),
                 "terminal before any open"));
  CHECK(contains(msg_of([] {
                   delinearize({Action::open("S"), Action::terminal("NN"),
                                Action::close(), Action::terminal("NN")});
                 }),
                 "after the root"));
}

TEST_CASE("random trees round-trip through the action encoding") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    ConstituencyTree t = random_tree(rng, 6);
    if (t.leaf()) continue;  // bare leaves round-trip to their X wrapper
    ActionSequence seq = linearize_tree(t);
    CHECK(delinearize(seq) == t);
  }
}

TEST_CASE("automaton: opening moves only at the start") {
  ActionAutomaton a;
  ActionMask m = a.permissible();
  CHECK(m.open);
  CHECK(!m.terminal);
  CHECK(!m.close);

  a.apply(Action::open("S"));
  m = a.permissible();
  CHECK(m.open);
  CHECK(m.terminal);
  CHECK(!m.close);  // empty constituent may not close

  a.apply(Action::terminal("NN"));
  CHECK(a.permissible().close);

  a.apply(Action::close());
  CHECK(a.finished());
  CHECK(msg_of([&] { (void)a.permissible(); }) != "");
  CHECK(contains(msg_of([&] { a.apply(Action::close()); }), "finished"));
}

TEST_CASE("automaton rejects impermissible actions") {
  ActionAutomaton a;
  CHECK(contains(msg_of([&] { a.apply(Action::terminal("NN")); }),
                 "not permissible"));
  a.apply(Action::open("S"));
  CHECK(contains(msg_of([&] { a.apply(Action::close()); }),
                 "not permissible"));
}

TEST_CASE("automaton: depth cap excludes open") {
  ActionAutomaton a;
  for (int d = 0; d < kMaxOpenDepth; ++d) a.apply(Action::open("S"));
  CHECK(a.depth() == kMaxOpenDepth);
  ActionMask m = a.permissible();
  CHECK(!m.open);
  CHECK(m.terminal);
}

TEST_CASE("automaton: action cap forces closure") {
  ActionAutomaton a;
  a.apply(Action::open("S"));
  for (int i = 0; i < kMaxActions - 1; ++i) a.apply(Action::terminal("NN"));
  CHECK(a.steps() == kMaxActions);
  ActionMask m = a.permissible();
  CHECK(!m.open);
  CHECK(!m.terminal);
  CHECK(m.close);
  a.apply(Action::close());
  CHECK(a.finished());

  // hitting the cap right after an open: the filler terminal is the only move
  ActionAutomaton b;
  b.apply(Action::open("S"));
  for (int i = 0; i < kMaxActions - 2; ++i) b.apply(Action::terminal("NN"));
  b.apply(Action::open("NP"));
  CHECK(b.steps() == kMaxActions);
  m = b.permissible();
  CHECK(!m.open);
  CHECK(m.terminal);
  CHECK(!m.close);
  b.apply(Action::terminal("NN"));
  b.apply(Action::close());
  b.apply(Action::close());
  CHECK(b.finished());
}

TEST_CASE("random rollouts always delinearize") {
  std::mt19937_64 rng(11);
  static const char* kNt[] = {"S", "NP", "VP"};
  static const char* kPos[] = {"DT", "NN", "VBD"};
  std::uniform_int_distribution<int> pick(0, 2);
  // biased towards opens to exercise the caps now and then
  std::uniform_int_distribution<int> kind(0, 9);
  const int kRollouts = 10000;
  for (int i = 0; i < kRollouts; ++i) {
    ActionAutomaton a;
    ActionSequence seq;
    while (!a.finished()) {
      ActionMask m = a.permissible();
      CHECK((m.open || m.terminal || m.close));
      Action act;
      for (;;) {
        int k = kind(rng);
        if (k < 4 && m.open) {
          act = Action::open(kNt[pick(rng)]);
          break;
        }
        if (k < 7 && m.terminal) {
          act = Action::terminal(kPos[pick(rng)]);
          break;
        }
        if (m.close) {
          act = Action::close();
          break;
        }
        if (m.terminal) {
          act = Action::terminal(kPos[pick(rng)]);
          break;
        }
      }
      a.apply(act);
      seq.push_back(act);
    }
    CHECK((int)seq.size() <= kMaxActions + 2 * kMaxOpenDepth);
    ConstituencyTree t = delinearize(seq);  // throws on any malformation
    CHECK(!t.label.empty());
  }
}

TEST_CASE("action tokens round-trip") {
  Action acts[] = {Action::open("S"), Action::open("NP"),
                   Action::terminal("NN"), Action::terminal("PRP$"),
                   Action::close()};
  for (const Action& a : acts)
    CHECK(action_from_token(action_token(a)) == a);
}
