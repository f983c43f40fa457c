#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "amrgen/corpus.hpp"

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

}  // namespace

TEST_CASE("vocab reserves pad/unk/bos/eos at fixed rows") {
  Vocab v;
  CHECK(v.size() == 4);
  CHECK(v.get("<pad>") == kPadId);
  CHECK(v.get("<unk>") == kUnkId);
  CHECK(v.get("<bos>") == kBosId);
  CHECK(v.get("<eos>") == kEosId);
  CHECK(v.get("missing") == kUnkId);
  CHECK(v.token(kBosId) == "<bos>");
  CHECK_THROWS_AS((void)v.token(4), VocabError);
  CHECK(v.add("x") == 4);
  CHECK(v.add("x") == 4);
  CHECK(v.contains("x"));
}

TEST_CASE("vocab_from_counts orders by count then token") {
  std::map<std::string, long long> counts{{"b", 1}, {"a", 2}, {"c", 2}};
  Vocab v = vocab_from_counts(counts);
  CHECK(v.size() == 7);
  CHECK(v.get("a") == 4);
  CHECK(v.get("c") == 5);
  CHECK(v.get("b") == 6);
  CHECK(v.count("a") == 2);
  CHECK(v.count("b") == 1);
  CHECK(v.count("<pad>") == 0);
  Vocab again = vocab_from_counts(counts);
  CHECK(again.tokens == v.tokens);
}

TEST_CASE("preprocess aligns AMR blocks with parse lines") {
  Corpus c = preprocess(kAmrTwo, kPtbTwo);
  REQUIRE(c.size() == 2);

  CHECK(c[0].id == "ex1");
  CHECK(c[0].amr_tokens ==
        std::vector<std::string>{"want", ":arg0", "dog", ":arg1", "ball"});
  CHECK(c[0].anon_table.empty());
  CHECK(c[0].words ==
        std::vector<std::string>{"the", "dog", "wants", "the", "ball", "."});
  CHECK(c[0].pos_tags ==
        std::vector<std::string>{"DT", "NN", "VBZ", "DT", "NN", "."});
  ActionSequence want{Action::open("S"),    Action::open("NP"),
                      Action::terminal("DT"), Action::terminal("NN"),
                      Action::close(),      Action::open("VP"),
                      Action::terminal("VBZ"), Action::open("NP"),
                      Action::terminal("DT"), Action::terminal("NN"),
                      Action::close(),      Action::close(),
                      Action::terminal("."), Action::close()};
  CHECK(c[0].parse_actions == want);

  CHECK(c[1].id == "ex2");
  CHECK(c[1].amr_tokens ==
        std::vector<std::string>{"see", ":arg0", "person_0", ":arg1", "cat"});
  REQUIRE(c[1].anon_table.count("person_0") == 1);
  CHECK(c[1].anon_table.at("person_0") == "Ana Kim");
  CHECK(c[1].words ==
        std::vector<std::string>{"person_0", "sees", "a", "cat", "."});
}

TEST_CASE("preprocess lowercases words but keeps placeholders") {
  Corpus c = preprocess(kAmrTwo, kPtbTwo);
  CHECK(c[1].words[0] == "person_0");
  CHECK(c[1].words[1] == "sees");
}

TEST_CASE("preprocess aborts on count mismatch naming the first unmatched") {
  std::string one_parse =
      "((S (NP (DT The) (NN dog)) (VP (VBZ wants) (NP (DT the) (NN ball))) "
      "(. .)))\n";
  CHECK_THROWS_WITH_AS(preprocess(kAmrTwo, one_parse),
                       doctest::Contains("ex2"), CorpusError);
  std::string three_parses = std::string(kPtbTwo) + one_parse;
  CHECK_THROWS_WITH_AS(preprocess(kAmrTwo, three_parses),
                       doctest::Contains("parse line 3"), CorpusError);
}

TEST_CASE("preprocess wraps per-example data errors with the id") {
  std::string bad_amr =
      "# ::id bad1\n"
      "# ::snt x\n"
      "(x / \n";
  std::string parse = "((S (NP (NN x))))\n";
  CHECK_THROWS_WITH_AS(preprocess(bad_amr, parse), doctest::Contains("bad1"),
                       CorpusError);
  std::string ok_amr = "# ::id t1\n(a / alpha)\n";
  std::string bad_parse = "((S (NP (NN x))\n";
  CHECK_THROWS_WITH_AS(preprocess(ok_amr, bad_parse), doctest::Contains("t1"),
                       CorpusError);
}

TEST_CASE("jsonl round trip preserves every field") {
  Corpus c = preprocess(kAmrTwo, kPtbTwo);
  std::ostringstream out;
  save_jsonl(out, c);
  std::istringstream in(out.str());
  Corpus back = load_jsonl(in, "buffer");
  REQUIRE(back.size() == c.size());
  CHECK(back[0] == c[0]);
  CHECK(back[1] == c[1]);
}

TEST_CASE("load_jsonl reports the offending line") {
  std::istringstream bad("{\"id\": \"a\"\n");
  CHECK_THROWS_WITH_AS(load_jsonl(bad, "f.jsonl"), doctest::Contains("f.jsonl:1"),
                       CorpusError);

  std::istringstream missing("{\"id\": \"a\", \"amr_tokens\": []}\n");
  CHECK_THROWS_AS(load_jsonl(missing, "f.jsonl"), CorpusError);
}

TEST_CASE("load_jsonl rejects internally inconsistent examples") {
  std::string line =
      "{\"id\":\"x\",\"amr_tokens\":[\"a\"],\"anon_table\":{},"
      "\"parse_actions\":[\"(S\",\"NN\",\")\"],\"pos_tags\":[\"VB\"],"
      "\"words\":[\"w\"]}\n";
  std::istringstream in(line);
  CHECK_THROWS_WITH_AS(load_jsonl(in, "f"), doctest::Contains("disagree"),
                       CorpusError);

  std::string short_words =
      "{\"id\":\"x\",\"amr_tokens\":[\"a\"],\"anon_table\":{},"
      "\"parse_actions\":[\"(S\",\"NN\",\")\"],\"pos_tags\":[\"NN\"],"
      "\"words\":[]}\n";
  std::istringstream in2(short_words);
  CHECK_THROWS_AS(load_jsonl(in2, "f"), CorpusError);

  std::string unbalanced =
      "{\"id\":\"x\",\"amr_tokens\":[\"a\"],\"anon_table\":{},"
      "\"parse_actions\":[\"(S\",\"NN\"],\"pos_tags\":[\"NN\"],"
      "\"words\":[\"w\"]}\n";
  std::istringstream in3(unbalanced);
  CHECK_THROWS_AS(load_jsonl(in3, "f"), CorpusError);
}

TEST_CASE("build_vocabs counts every stream and rejects empty corpora") {
  Corpus c = preprocess(kAmrTwo, kPtbTwo);
  VocabSet v = build_vocabs(c);
  CHECK(v.amr.contains("want"));
  CHECK(v.amr.contains(":arg0"));
  CHECK(v.amr.contains("person_0"));
  CHECK(v.amr.count(":arg0") == 2);
  CHECK(v.action.contains("(S"));
  CHECK(v.action.contains(")"));
  CHECK(v.action.contains("NN"));
  CHECK(v.action.count("(NP") == 4);
  CHECK(v.word.count("the") == 2);
  CHECK(v.word.contains("person_0"));
  CHECK(v.pos.contains("VBZ"));
  CHECK_FALSE(v.pos.contains("(S"));
  CHECK_THROWS_AS(build_vocabs(Corpus{}), ConfigError);
}

TEST_CASE("corpus_stats singleton count matches an independent recount") {
  Corpus c = preprocess(kAmrTwo, kPtbTwo);
  VocabSet v = build_vocabs(c);
  PreprocessStats s = corpus_stats(c, v);
  CHECK(s.n_examples == 2);
  CHECK(s.word_vocab == v.word.size());

  std::map<std::string, int> recount;
  for (const Example& ex : c)
    for (const auto& w : ex.words) ++recount[w];
  int singletons = 0;
  for (const auto& [w, n] : recount)
    if (n == 1) ++singletons;
  CHECK(s.word_singletons == singletons);
  CHECK(s.singleton_fraction ==
        doctest::Approx((double)singletons / (double)recount.size()));
  CHECK(s.max_actions == 14);
  CHECK(s.mean_actions == doctest::Approx((14 + 13) / 2.0));
}
