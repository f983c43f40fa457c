#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "amrgen/model.hpp"
#include "gradcheck.hpp"

using namespace amrgen;

namespace {

const char* kAmrTwo =
    "# ::id ex1\n"
    "# ::snt The dog wants the ball .\n"
    "(w / want-01\n"
    "   :ARG0 (d / dog)\n"
    "   :ARG1 (b / ball))\n"
    "\n"
    "# ::id ex2\n"
    "# ::snt Ana Kim sees a cat .\n"
    "(s / see-01\n"
    "   :ARG0 (p / person\n"
    "            :name (n / name :op1 \"Ana\" :op2 \"Kim\"))\n"
    "   :ARG1 (c / cat))\n";

const char* kPtbTwo =
    "((S (NP (DT The) (NN dog)) (VP (VBZ wants) (NP (DT the) (NN ball))) "
    "(. .)))\n"
    "((S (NP (NNP person_0)) (VP (VBZ sees) (NP (DT a) (NN cat))) (. .)))\n";

struct Fixture {
  Corpus corpus;
  VocabSet vocabs;
  Fixture() : corpus(preprocess(kAmrTwo, kPtbTwo)), vocabs(build_vocabs(corpus)) {}
};

ModelConfig small_cfg(Task task, int hidden = 12, int emb = 8) {
  ModelConfig c;
  c.task = task;
  c.hidden = hidden;
  c.emb = emb;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.dropout = 0;
  c.rec_dropout = 0;
  return c;
}

// An example whose AMR carries a concept absent from every vocabulary and
// whose reference repeats it, exercising the dynamic copy slots end to end.
Example oov_example() {
  Example e;
  e.id = "oov";
  e.amr_tokens = {"see", ":arg0", "dog", ":arg1", "zorb"};
  e.parse_actions = {Action::open("S"),      Action::open("NP"),
                     Action::terminal("NN"), Action::close(),
                     Action::open("VP"),     Action::terminal("VBZ"),
                     Action::open("NP"),     Action::terminal("NN"),
                     Action::close(),        Action::close(),
                     Action::close()};
  e.pos_tags = {"NN", "VBZ", "NN"};
  e.words = {"dog", "sees", "zorb"};
  return e;
}

Mat dist_value(Tape& t, Var v) { return t.value(v); }

}  // namespace

TEST_CASE("task names round trip and reject unknowns") {
  for (Task t : {Task::kJoint, Task::kAmr2Parse, Task::kText2Parse,
                 Task::kUnconditionalLm, Task::kBaselineS2sCopy})
    CHECK(task_from_name(task_name(t)) == t);
  CHECK(task_name(Task::kJoint) == "joint");
  CHECK(task_name(Task::kBaselineS2sCopy) == "baseline_s2s_copy");
  CHECK_THROWS_AS(task_from_name("amr2text"), ConfigError);
}

TEST_CASE("index_example resolves ids and keeps strings") {
  Fixture f;
  IndexedExample ix = index_example(f.corpus[1], f.vocabs);
  REQUIRE(ix.amr_ids.size() == 5);
  CHECK(ix.amr_ids[0] == f.vocabs.amr.get("see"));
  CHECK(ix.amr_tokens[2] == "person_0");
  CHECK(ix.action_ids.size() == f.corpus[1].parse_actions.size());
  CHECK(ix.word_ids[0] == f.vocabs.word.get("person_0"));
  CHECK(ix.words[4] == ".");

  IndexedExample oov = index_example(oov_example(), f.vocabs);
  CHECK(oov.amr_ids[4] == kUnkId);
  CHECK(oov.word_ids[2] == kUnkId);
}

TEST_CASE("same seed builds identical parameters, different seeds differ") {
  Fixture f;
  Seq2SeqModel a(small_cfg(Task::kJoint), f.vocabs, 11);
  Seq2SeqModel b(small_cfg(Task::kJoint), f.vocabs, 11);
  Seq2SeqModel c(small_cfg(Task::kJoint), f.vocabs, 12);
  auto pa = a.params().all(), pb = b.params().all(), pc = c.params().all();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->name == pb[i]->name);
    if (pa[i]->value != pb[i]->value) all_equal = false;
    if (pa[i]->value != pc[i]->value) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("layer-norm gains start at one and forget biases open") {
  Fixture f;
  Seq2SeqModel m(small_cfg(Task::kJoint), f.vocabs, 1);
  auto* g = m.params().find("lex_dec.lstm.l0.ln_g.i");
  REQUIRE(g != nullptr);
  CHECK(g->value(0, 0) == Real(1));
  auto* bf = m.params().find("lex_dec.lstm.l0.ln_b.f");
  REQUIRE(bf != nullptr);
  CHECK(bf->value(0, 0) == Real(1));
  auto* bi = m.params().find("lex_dec.lstm.l0.ln_b.i");
  REQUIRE(bi != nullptr);
  CHECK(bi->value(0, 0) == Real(0));
}

TEST_CASE("every task computes a finite teacher-forced loss") {
  Fixture f;
  for (Task task : {Task::kJoint, Task::kAmr2Parse, Task::kText2Parse,
                    Task::kUnconditionalLm, Task::kBaselineS2sCopy}) {
    Seq2SeqModel m(small_cfg(task), f.vocabs, 3);
    for (const Example& e : f.corpus) {
      IndexedExample ix = index_example(e, f.vocabs);
      Tape t;
      LossOut lo = m.example_loss(t, ix, nullptr);
      double v = double(t.value(lo.total)(0, 0));
      CHECK(std::isfinite(v));
      CHECK(v > 0);
      bool syn = task != Task::kBaselineS2sCopy;
      bool lex = task == Task::kJoint || task == Task::kBaselineS2sCopy;
      CHECK((lo.parse_tokens > 0) == syn);
      CHECK((lo.text_tokens > 0) == lex);
      CHECK(doctest::Approx(v).epsilon(1e-12) == lo.parse_nll + lo.text_nll);
    }
  }
}

TEST_CASE("evaluation loss is deterministic, dropout draws change it") {
  Fixture f;
  ModelConfig cfg = small_cfg(Task::kJoint);
  cfg.dropout = 0.4;
  cfg.rec_dropout = 0.25;
  Seq2SeqModel m(cfg, f.vocabs, 3);
  IndexedExample ix = index_example(f.corpus[0], f.vocabs);

  Tape t1, t2;
  double a = t1.value(m.example_loss(t1, ix, nullptr).total)(0, 0);
  double b = t2.value(m.example_loss(t2, ix, nullptr).total)(0, 0);
  CHECK(a == b);

  Rng r1(5), r2(5), r3(6);
  Tape t3, t4, t5;
  double c = t3.value(m.example_loss(t3, ix, &r1).total)(0, 0);
  double d = t4.value(m.example_loss(t4, ix, &r2).total)(0, 0);
  double e = t5.value(m.example_loss(t5, ix, &r3).total)(0, 0);
  CHECK(c == d);       // same dropout seed, same loss
  CHECK(c != e);       // different draws
  CHECK(std::isfinite(c));
}

TEST_CASE("syntax distributions honour the automaton mask exactly") {
  Fixture f;
  Seq2SeqModel m(small_cfg(Task::kAmr2Parse), f.vocabs, 9);
  IndexedExample ix = index_example(f.corpus[0], f.vocabs);
  Tape t;
  DropoutCtx off = m.encoder_dropout(nullptr);
  Encoded enc = m.encode_source(t, ix, off);
  DecState st = m.init_syntax_state(t, enc);

  ActionAutomaton autom;
  ActionMask first = autom.permissible();  // fresh: open only
  CHECK(first.open);
  CHECK_FALSE(first.terminal);
  CHECK_FALSE(first.close);
  StepOut so = m.syntax_step(t, enc, st, kBosId, first, off);
  Mat d = dist_value(t, so.dist);
  REQUIRE(d.rows() == f.vocabs.action.size());
  double sum = 0;
  for (int i = 0; i < d.rows(); ++i) {
    sum += double(d(i, 0));
    const std::string& tok = f.vocabs.action.tokens[std::size_t(i)];
    bool is_open = tok.size() > 1 && tok[0] == '(';
    if (i < 4 || !is_open)
      CHECK(d(i, 0) == Real(0));  // masked rows are exactly zero
    else
      CHECK(d(i, 0) > Real(0));
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("copy gate endpoints recover p_lex and pure copy exactly") {
  Fixture f;
  Seq2SeqModel m(small_cfg(Task::kJoint), f.vocabs, 21);
  IndexedExample ix = index_example(oov_example(), f.vocabs);
  const Eigen::Index vw = f.vocabs.word.size();
  m.params().find("lex_dec.gate.o")->init_const(0);

  auto run = [&](Real bias, Mat* out, std::set<Eigen::Index>* support) {
    m.params().find("lex_dec.gate.ob")->init_const(bias);
    Tape t;
    DropoutCtx off = m.encoder_dropout(nullptr);
    Encoded enc = m.encode_source(t, ix, off);
    m.attach_parse(t, enc, ix.action_ids, off);
    DecState st = m.init_lex_state(t, enc);
    StepOut so = m.lex_step(t, enc, st, kBosId, off);
    REQUIRE(so.has_theta);
    *out = t.value(so.dist);
    if (support)
      for (Eigen::Index id : enc.copy_ids) support->insert(id);
    return double(t.value(so.theta)(0, 0));
  };

  Mat plex, copy;
  std::set<Eigen::Index> copy_support;
  double th0 = run(Real(-1e4), &plex, nullptr);
  double th1 = run(Real(1e4), &copy, &copy_support);
  CHECK(th0 == 0.0);
  CHECK(th1 == 1.0);
  // dynamic slots: "see", ":arg0", ":arg1", "zorb" (only "dog" is in vocab)
  REQUIRE(plex.rows() == vw + 4);
  REQUIRE(copy.rows() == vw + 4);

  double sum0 = 0, sum1 = 0;
  for (Eigen::Index i = 0; i < plex.rows(); ++i) {
    sum0 += double(plex(i, 0));
    sum1 += double(copy(i, 0));
    if (i >= vw)
      CHECK(plex(i, 0) == Real(0));  // lexicon places nothing on dynamic rows
    else
      CHECK(plex(i, 0) > Real(0));
    if (copy_support.count(i))
      CHECK(copy(i, 0) > Real(0));
    else
      CHECK(copy(i, 0) == Real(0));  // copy only covers input tokens
  }
  CHECK(sum0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sum1 == doctest::Approx(1.0).epsilon(1e-12));

  // Intermediate gate values give the exact convex combination.
  for (double theta : {0.25, 0.5, 0.8}) {
    Mat mix;
    double th = run(Real(std::log(theta / (1 - theta))), &mix, nullptr);
    CHECK(th == doctest::Approx(theta).epsilon(1e-12));
    for (Eigen::Index i = 0; i < mix.rows(); ++i)
      CHECK(double(mix(i, 0)) ==
            doctest::Approx((1 - th) * double(plex(i, 0)) +
                            th * double(copy(i, 0)))
                .epsilon(1e-9));
  }
}

TEST_CASE("an out-of-vocabulary concept is reachable through the copy slot") {
  Fixture f;
  Seq2SeqModel m(small_cfg(Task::kJoint), f.vocabs, 4);
  IndexedExample ix = index_example(oov_example(), f.vocabs);
  Tape t;
  DropoutCtx off = m.encoder_dropout(nullptr);
  Encoded enc = m.encode_source(t, ix, off);
  REQUIRE(enc.ext_tokens ==
          std::vector<std::string>{"see", ":arg0", ":arg1", "zorb"});
  const Eigen::Index vw = f.vocabs.word.size();
  CHECK(enc.ext_size == vw + 4);
  CHECK(enc.copy_ids[4] == vw + 3);
  CHECK(enc.copy_ids[2] == f.vocabs.word.get("dog"));
  CHECK(m.output_token(enc, vw + 3) == "zorb");
  CHECK(m.output_token(enc, f.vocabs.word.get("dog")) == "dog");

  m.attach_parse(t, enc, ix.action_ids, off);
  DecState st = m.init_lex_state(t, enc);
  StepOut so = m.lex_step(t, enc, st, kBosId, off);
  CHECK(t.value(so.dist)(vw + 3, 0) > Real(0));
}

TEST_CASE("word targets prefer vocabulary, then copy slots, then unk") {
  Fixture f;
  Seq2SeqModel m(small_cfg(Task::kJoint), f.vocabs, 4);
  Example e = oov_example();
  e.words = {"dog", "sees", "zorb"};
  IndexedExample ix = index_example(e, f.vocabs);
  Tape t;
  DropoutCtx off = m.encoder_dropout(nullptr);
  Encoded enc = m.encode_source(t, ix, off);
  auto tg = m.word_targets(ix, enc);
  REQUIRE(tg.size() == 4);
  CHECK(tg[0] == f.vocabs.word.get("dog"));
  CHECK(tg[1] == f.vocabs.word.get("sees"));
  CHECK(tg[2] == f.vocabs.word.size() + 3);  // dynamic slot for "zorb"
  CHECK(tg[3] == kEosId);

  e.words = {"dog", "sees", "qux"};  // OOV absent from the AMR input
  IndexedExample ix2 = index_example(e, f.vocabs);
  Tape t2;
  Encoded enc2 = m.encode_source(t2, ix2, off);
  auto tg2 = m.word_targets(ix2, enc2);
  CHECK(tg2[2] == kUnkId);
}

TEST_CASE("joint loss reaches the shared tables from both stages") {
  Fixture f;
  Seq2SeqModel m(small_cfg(Task::kJoint), f.vocabs, 2);
  IndexedExample ix = index_example(f.corpus[1], f.vocabs);
  Tape t;
  LossOut lo = m.example_loss(t, ix, nullptr);
  m.params().zero_grads();
  t.backward(lo.total);
  for (const char* name : {"amr_emb", "act_emb", "word_emb",
                           "amr_enc.l0.fwd.Wx", "parse_enc.l0.bwd.Wx",
                           "syn_dec.proj", "lex_dec.proj", "lex_dec.gate.o"}) {
    auto* p = m.params().find(name);
    REQUIRE(p != nullptr);
    CHECK(p->grad.norm() > 0);
  }
}

TEST_CASE("adam on one example halves the joint loss within 120 steps") {
  Fixture f;
  Seq2SeqModel m(small_cfg(Task::kJoint, 16, 12), f.vocabs, 5);
  IndexedExample ix = index_example(f.corpus[0], f.vocabs);
  Adam opt;
  AdamConfig acfg;
  double first = 0, last = 0;
  for (int step = 0; step < 120; ++step) {
    Tape t;
    LossOut lo = m.example_loss(t, ix, nullptr);
    double v = double(t.value(lo.total)(0, 0));
    REQUIRE(std::isfinite(v));
    if (step == 0) first = v;
    last = v;
    m.params().zero_grads();
    t.backward(lo.total);
    clip_grad_norm(m.params(), Real(5));
    opt.step(m.params(), acfg);
  }
  CHECK(last < 0.5 * first);
}

TEST_CASE("finite differences confirm the full joint gradient") {
  Fixture f;
  ModelConfig cfg = small_cfg(Task::kJoint, 8, 5);
  Seq2SeqModel m(cfg, f.vocabs, 13);
  IndexedExample ix = index_example(oov_example(), f.vocabs);
  auto build = [&](Tape& t) { return m.example_loss(t, ix, nullptr).total; };
  auto res = test::grad_check(m.params().all(), build, 1e-4);
  INFO("worst: ", res.worst, " rel ", res.max_rel, " over ", res.checked);
  CHECK(res.ok(1e-4));
}
