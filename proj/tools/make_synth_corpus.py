#!/usr/bin/env python3
"""Writes the synthetic AMR / parse corpus under data/synthetic/.

Each example is one AMR block (# ::id, # ::snt, PENMAN graph) paired with one
PTB-style parse of the anonymized sentence, so named entities, dates and
quantities appear as placeholder terminals (person_0, date_0, quantity_0, ...).
Template families share AMR shapes across several surface alternations
(present / past tense, active / passive, double-object / to-dative, fronted
adjuncts) so the parse is not recoverable from the AMR alone, while every word
sequence has exactly one parse.  Train-only rare nouns occur once each (copy
training through unknown-word noise); dev and test additionally use nouns that
never occur in train at all.
"""

import argparse
import os
import random

MONTHS = ["January", "February", "March", "April", "May", "June", "July",
          "August", "September", "October", "November", "December"]

V_TRANS = [("want", "wants", "wanted", "wanted"),
           ("chase", "chases", "chased", "chased"),
           ("see", "sees", "saw", "seen"),
           ("find", "finds", "found", "found"),
           ("admire", "admires", "admired", "admired"),
           ("follow", "follows", "followed", "followed"),
           ("sketch", "sketches", "sketched", "sketched")]
V_DATIVE = [("give", "gives", "gave"),
            ("send", "sends", "sent"),
            ("show", "shows", "showed")]
V_INTRANS = [("sleep", "sleeps", "slept"),
             ("run", "runs", "ran"),
             ("glow", "glows", "glowed"),
             ("graze", "grazes", "grazed"),
             ("wait", "waits", "waited")]
V_CONTROL = [("want", "wants"), ("try", "tries"), ("plan", "plans")]
V_COMP = ["sleep", "run", "sing"]
V_LAST = ("last", "lasts", "lasted")

NOUNS = ["dog", "cat", "boy", "girl", "teacher", "farmer", "bird", "horse",
         "book", "ball", "letter", "song", "kitten", "painting", "poem",
         "photo", "fox", "rabbit", "child", "student"]
LOCS = ["garden", "river", "market", "house", "field", "library"]
TRIPS = ["trip", "visit", "festival"]
ADJS = ["quiet", "happy", "bright", "tired", "small", "brave"]

# Once each in train: copy practice through singleton-word noise.
RARE_TRAIN = ["quasar", "obelisk", "mandolin", "gazebo", "icicle", "jackal",
              "kumquat", "lyrebird", "mongoose", "narwhal", "ocelot",
              "pangolin", "quokka", "rambutan", "sitar", "tapir", "wombat",
              "zither"]
# Never in train at all: out-of-vocabulary copying on dev / test.
UNSEEN_DEV = ["zebu", "okapi", "saola", "dugong", "markhor"]
UNSEEN_TEST = ["taruca", "serow", "urial", "vicuna", "numbat"]

PERSONS = [["Ana", "Kim"], ["Mara", "Soto"], ["Ravi"], ["Noor", "Haddad"],
           ["Tomo", "Abe"], ["Lee"]]
PERSONS_UNSEEN = [["Iris", "Vane"], ["Odo"]]
CITIES = ["Oslo", "Lima", "Quito", "Kyoto"]


class N:
    """AMR node; rendering assigns variables and turns re-visits into bare
    variable references."""

    def __init__(self, concept, *edges):
        self.concept = concept
        self.edges = list(edges)
        self.var = None


class Lit:
    def __init__(self, text):
        self.text = text


def render_amr(root):
    used = {}

    def var_for(concept):
        base = concept[0].lower()
        k = used.get(base, 0)
        used[base] = k + 1
        return base if k == 0 else base + str(k + 1)

    def walk(node, indent):
        if node.var is not None:
            return node.var
        node.var = var_for(node.concept)
        parts = ["(%s / %s" % (node.var, node.concept)]
        for role, tgt in node.edges:
            if isinstance(tgt, N):
                t = walk(tgt, indent + 3)
            elif isinstance(tgt, Lit):
                t = '"%s"' % tgt.text
            else:
                t = str(tgt)
            parts.append("\n" + " " * (indent + 3) + "%s %s" % (role, t))
        return "".join(parts) + ")"

    return walk(root, 0)


def name_node(parts):
    return N("name", *[(":op%d" % (i + 1), Lit(p))
                       for i, p in enumerate(parts)])


def render_date(year, month, day):
    out = []
    if 1 <= month <= 12:
        out.append(MONTHS[month - 1])
    if day > 0:
        out.append(str(day))
    if year > 0:
        out.append(str(year))
    return " ".join(out)


# ---------------------------------------------------------------------------
# parse scaffolding: trees are nested lists, leaves are [tag, word]

def tree_str(t):
    if len(t) == 2 and isinstance(t[1], str):
        return "(%s %s)" % (t[0], t[1])
    return "(%s %s)" % (t[0], " ".join(tree_str(k) for k in t[1:]))


def leaves(t, out):
    if len(t) == 2 and isinstance(t[1], str):
        out.append(t)
        return
    for k in t[1:]:
        leaves(k, out)


def sentence(*kids):
    return ["S"] + list(kids) + [[".", "."]]


def finish(tree, table):
    """Capitalizes a sentence-initial determiner, extracts the anonymized
    token list, and builds the natural ::snt line via the anon table."""
    lv = []
    leaves(tree, lv)
    if lv[0][1] in ("the", "a"):
        lv[0][1] = lv[0][1].capitalize()
    tokens = [w for _, w in lv]
    natural = []
    for w in tokens:
        natural.extend(table[w].split(" ") if w in table else [w])
    return "(%s)" % tree_str(tree), tokens, " ".join(natural)


def np(noun, det="the"):
    return ["NP", ["DT", det], ["NN", noun]]


def np_ph(ph):
    return ["NP", ["NNP", ph]]


def pp(prep, tag, obj):
    return ["PP", [tag, prep], obj]


# ---------------------------------------------------------------------------
# template families
#
# Every maker returns (amr_text, ptb_line, snt_line).

def ex_trans(verb, subj, obj, alt):
    amr = N(verb[0] + "-01", (":ARG0", N(subj)), (":ARG1", N(obj)))
    if alt == "pres":
        t = sentence(np(subj), ["VP", ["VBZ", verb[1]], np(obj)])
    elif alt == "past":
        t = sentence(np(subj), ["VP", ["VBD", verb[2]], np(obj)])
    else:  # passive
        t = sentence(np(obj), ["VP", ["VBZ", "is"],
                               ["VP", ["VBN", verb[3]], pp("by", "IN",
                                                           np(subj))]])
    ptb, _, snt = finish(t, {})
    return render_amr(amr), ptb, snt


def ex_trans_time(verb, subj, obj, month, day, year, alt, tense):
    amr = N(verb[0] + "-01", (":ARG0", N(subj)), (":ARG1", N(obj)),
            (":time", date_node(year, month, day)))
    table = {"date_0": render_date(year, month, day)}
    vp = ["VP", ["VBZ" if tense == "pres" else "VBD",
                 verb[1] if tense == "pres" else verb[2]], np(obj)]
    when = pp("on", "IN", np_ph("date_0"))
    if alt == "insitu":
        vp = vp + [when]
        t = sentence(np(subj), vp)
    else:
        t = sentence(when, np(subj), vp)
    ptb, _, snt = finish(t, table)
    return render_amr(amr), ptb, snt


def date_node(year, month, day):
    edges = []
    if year:
        edges.append((":year", year))
    if month:
        edges.append((":month", month))
    if day:
        edges.append((":day", day))
    return N("date-entity", *edges)


def ex_dative(verb, subj, theme, goal, alt, tense):
    amr = N(verb[0] + "-01", (":ARG0", N(subj)), (":ARG1", N(theme)),
            (":ARG2", N(goal)))
    v = ["VBZ" if tense == "pres" else "VBD",
         verb[1] if tense == "pres" else verb[2]]
    if alt == "pp":
        vp = ["VP", v, np(theme), pp("to", "TO", np(goal))]
    else:
        vp = ["VP", v, np(goal), np(theme)]
    ptb, _, snt = finish(sentence(np(subj), vp), {})
    return render_amr(amr), ptb, snt


def ex_intrans(verb, subj, tense, loc=None, fronted=False, city=None):
    edges = [(":ARG0", N(subj))]
    table = {}
    if city:
        edges.append((":location", N("city", (":name", name_node([city])))))
        table["city_0"] = city
        where = pp("in", "IN", np_ph("city_0"))
    elif loc:
        edges.append((":location", N(loc)))
        where = pp("in", "IN", np(loc))
    else:
        where = None
    amr = N(verb[0] + "-01", *edges)
    vp = ["VP", ["VBZ" if tense == "pres" else "VBD",
                 verb[1] if tense == "pres" else verb[2]]]
    if where and not fronted:
        vp = vp + [where]
        t = sentence(np(subj), vp)
    elif where:
        t = sentence(where, np(subj), vp)
    else:
        t = sentence(np(subj), vp)
    ptb, _, snt = finish(t, table)
    return render_amr(amr), ptb, snt


def ex_copular(adj, subj):
    amr = N(adj, (":domain", N(subj)))
    t = sentence(np(subj), ["VP", ["VBZ", "is"], ["ADJP", ["JJ", adj]]])
    ptb, _, snt = finish(t, {})
    return render_amr(amr), ptb, snt


def ex_named(verb, person, obj, tense):
    amr = N(verb[0] + "-01",
            (":ARG0", N("person", (":name", name_node(person)))),
            (":ARG1", N(obj)))
    table = {"person_0": " ".join(person)}
    t = sentence(np_ph("person_0"),
                 ["VP", ["VBZ" if tense == "pres" else "VBD",
                         verb[1] if tense == "pres" else verb[2]], np(obj)])
    ptb, _, snt = finish(t, table)
    return render_amr(amr), ptb, snt


def ex_quantity(noun, count, unit, tense):
    amr = N("last-01", (":ARG1", N(noun)),
            (":ARG2", N("temporal-quantity", (":quant", count),
                        (":unit", N(unit)))))
    table = {"quantity_0": str(count)}
    t = sentence(np(noun),
                 ["VP", ["VBZ" if tense == "pres" else "VBD",
                         V_LAST[1] if tense == "pres" else V_LAST[2]],
                  ["NP", ["CD", "quantity_0"], ["NNS", unit + "s"]]])
    ptb, _, snt = finish(t, table)
    return render_amr(amr), ptb, snt


def ex_control(mverb, subj, cverb):
    subj_node = N(subj)
    amr = N(mverb[0] + "-01", (":ARG0", subj_node),
            (":ARG1", N(cverb + "-01", (":ARG0", subj_node))))
    t = sentence(np(subj),
                 ["VP", ["VBZ", mverb[1]],
                  ["S", ["VP", ["TO", "to"], ["VP", ["VB", cverb]]]]])
    ptb, _, snt = finish(t, {})
    return render_amr(amr), ptb, snt


# ---------------------------------------------------------------------------

class Builder:
    def __init__(self, seed):
        self.rng = random.Random(seed)
        self.seen = {}  # split id -> AMR strings used there
        self.parse_of = {}  # word tuple -> ptb (one parse per word sequence)

    def pick(self, pool):
        return self.rng.choice(pool)

    def pair(self, pool):
        a = self.rng.choice(pool)
        b = self.rng.choice([x for x in pool if x != a])
        return a, b

    def add(self, split, made):
        amr, ptb, snt = made
        seen = self.seen.setdefault(id(split), set())
        if amr in seen:
            return False
        words = tuple(w.lower() for w in ptb.replace(")", " ").split()
                      if "(" not in w)
        if self.parse_of.setdefault(words, ptb) != ptb:
            raise AssertionError("one word sequence, two parses: %r" % (words,))
        seen.add(amr)
        split.append((amr, ptb, snt))
        return True

    def add_retry(self, split, maker):
        for _ in range(200):
            if self.add(split, maker()):
                return
        raise AssertionError("could not build a fresh example")


def build(seed):
    b = Builder(seed)
    rng = b.rng
    train, dev, test, overfit = [], [], [], []

    def date_args():
        return (rng.randint(1, 12), rng.randint(1, 28),
                rng.choice([0, 0, rng.randint(1995, 2030)]))

    # ---- train: 200 examples -------------------------------------------
    for alt, n in [("pres", 30), ("past", 15), ("passive", 15)]:
        for _ in range(n):
            b.add_retry(train, lambda: ex_trans(
                b.pick(V_TRANS), *b.pair(NOUNS), alt))
    for alt, tense, n in [("insitu", "pres", 8), ("insitu", "past", 5),
                          ("fronted", "pres", 5), ("fronted", "past", 4)]:
        for _ in range(n):
            m, d, y = date_args()
            b.add_retry(train, lambda: ex_trans_time(
                b.pick(V_TRANS), *b.pair(NOUNS), m, d, y, alt, tense))
    for alt, n in [("pp", 14), ("dobj", 12)]:
        for _ in range(n):
            b.add_retry(train, lambda: ex_dative(
                b.pick(V_DATIVE), *rng.sample(NOUNS, 3), alt,
                b.pick(["pres", "pres", "past"])))
    for _ in range(10):
        b.add_retry(train, lambda: ex_intrans(
            b.pick(V_INTRANS), b.pick(NOUNS),
            b.pick(["pres", "pres", "past"])))
    for _ in range(6):
        b.add_retry(train, lambda: ex_intrans(
            b.pick(V_INTRANS), b.pick(NOUNS), "pres", loc=b.pick(LOCS)))
    for _ in range(4):
        b.add_retry(train, lambda: ex_intrans(
            b.pick(V_INTRANS), b.pick(NOUNS), "pres", loc=b.pick(LOCS),
            fronted=True))
    for _ in range(4):
        b.add_retry(train, lambda: ex_intrans(
            b.pick(V_INTRANS), b.pick(NOUNS), "pres", city=b.pick(CITIES)))
    for _ in range(10):
        b.add_retry(train, lambda: ex_copular(b.pick(ADJS), b.pick(NOUNS)))
    for _ in range(14):
        b.add_retry(train, lambda: ex_named(
            b.pick(V_TRANS), b.pick(PERSONS), b.pick(NOUNS),
            b.pick(["pres", "pres", "past"])))
    for _ in range(10):
        b.add_retry(train, lambda: ex_quantity(
            b.pick(TRIPS), rng.randint(2, 30), b.pick(["day", "week"]),
            b.pick(["pres", "past"])))
    for _ in range(16):
        b.add_retry(train, lambda: ex_control(
            b.pick(V_CONTROL), b.pick(NOUNS), b.pick(V_COMP)))
    # rare singleton nouns, one occurrence each, in copyable slots
    for i, noun in enumerate(RARE_TRAIN):
        if i % 2 == 0:
            b.add_retry(train, lambda: ex_intrans(
                b.pick(V_INTRANS), noun, "pres"))
        else:
            b.add_retry(train, lambda: ex_trans(
                b.pick(V_TRANS), b.pick(NOUNS), noun, "pres"))
    assert len(train) == 200, len(train)

    # ---- dev / test: 30 each, minority alternations over-represented ----
    def side_split(split, unseen_nouns, unseen_person):
        for alt, n in [("pres", 4), ("past", 2), ("passive", 3)]:
            for _ in range(n):
                b.add_retry(split, lambda: ex_trans(
                    b.pick(V_TRANS), *b.pair(NOUNS), alt))
        for alt in ["insitu", "fronted", "fronted"]:
            m, d, y = date_args()
            b.add_retry(split, lambda: ex_trans_time(
                b.pick(V_TRANS), *b.pair(NOUNS), m, d, y, alt,
                b.pick(["pres", "past"])))
        for alt in ["pp", "pp", "dobj", "dobj"]:
            b.add_retry(split, lambda: ex_dative(
                b.pick(V_DATIVE), *rng.sample(NOUNS, 3), alt, "pres"))
        b.add_retry(split, lambda: ex_intrans(
            b.pick(V_INTRANS), b.pick(NOUNS), "past"))
        b.add_retry(split, lambda: ex_intrans(
            b.pick(V_INTRANS), b.pick(NOUNS), "pres", loc=b.pick(LOCS)))
        b.add_retry(split, lambda: ex_intrans(
            b.pick(V_INTRANS), b.pick(NOUNS), "pres", city=b.pick(CITIES)))
        b.add_retry(split, lambda: ex_copular(b.pick(ADJS), b.pick(NOUNS)))
        b.add_retry(split, lambda: ex_named(
            b.pick(V_TRANS), unseen_person, b.pick(NOUNS), "pres"))
        b.add_retry(split, lambda: ex_named(
            b.pick(V_TRANS), b.pick(PERSONS), b.pick(NOUNS), "past"))
        b.add_retry(split, lambda: ex_quantity(
            b.pick(TRIPS), rng.randint(31, 60), b.pick(["day", "week"]),
            "pres"))
        for _ in range(2):
            b.add_retry(split, lambda: ex_control(
                b.pick(V_CONTROL), b.pick(NOUNS), b.pick(V_COMP)))
        # nouns absent from train: reachable only through the copy gate
        for i, noun in enumerate(unseen_nouns):
            if i < 3:
                b.add_retry(split, lambda: ex_intrans(
                    b.pick(V_INTRANS), noun, "pres"))
            else:
                b.add_retry(split, lambda: ex_trans(
                    b.pick(V_TRANS), b.pick(NOUNS), noun, "pres"))
        assert len(split) == 30, len(split)

    side_split(dev, UNSEEN_DEV, PERSONS_UNSEEN[0])
    side_split(test, UNSEEN_TEST, PERSONS_UNSEEN[1])

    # ---- overfit set: 50 unique examples, every surface form >= twice ---
    def two_of(maker_for_nouns, pool=NOUNS):
        picks = rng.sample(pool, 2)
        for noun in picks:
            b.add_retry(overfit, lambda: maker_for_nouns(noun))

    for verb in V_TRANS[:4]:
        two_of(lambda n2: ex_trans(verb, b.pick(NOUNS), n2, "pres"))
    for verb in V_TRANS[4:7]:
        two_of(lambda n2: ex_trans(verb, b.pick(NOUNS), n2, "past"))
    for verb in V_TRANS[:3]:
        two_of(lambda n2: ex_trans(verb, b.pick(NOUNS), n2, "passive"))
    for verb in V_DATIVE[:2]:
        two_of(lambda n3: ex_dative(verb, b.pick(NOUNS), b.pick(NOUNS), n3,
                                    "pp", "pres"))
    for verb in V_DATIVE[1:3]:
        two_of(lambda n3: ex_dative(verb, b.pick(NOUNS), b.pick(NOUNS), n3,
                                    "dobj", "pres"))
    for _ in range(2):
        m, d, y = 3, 5, 0
        two_of(lambda n2: ex_trans_time(V_TRANS[0], b.pick(NOUNS), n2,
                                        m, d, y, "insitu", "pres"))
    two_of(lambda n2: ex_trans_time(V_TRANS[1], b.pick(NOUNS), n2,
                                    7, 14, 0, "fronted", "pres"))
    for verb in V_INTRANS[:3]:
        two_of(lambda n1: ex_intrans(verb, n1, "pres"))
    for adj in ADJS[:2]:
        two_of(lambda n1: ex_copular(adj, n1))
    for person in PERSONS[:2]:
        two_of(lambda n2: ex_named(V_TRANS[2], person, n2, "pres"))
    two_of(lambda n1: ex_control(V_CONTROL[0], n1, "sleep"))
    assert len(overfit) == 50, len(overfit)

    rng.shuffle(train)
    rng.shuffle(dev)
    rng.shuffle(test)
    rng.shuffle(overfit)
    return train, dev, test, overfit


def write_split(out_dir, name, prefix, examples):
    amr_path = os.path.join(out_dir, name + ".amr")
    ptb_path = os.path.join(out_dir, name + ".ptb")
    with open(amr_path, "w") as fa, open(ptb_path, "w") as fp:
        for i, (amr, ptb, snt) in enumerate(examples):
            fa.write("# ::id %s-%04d\n# ::snt %s\n%s\n\n" %
                     (prefix, i + 1, snt, amr))
            fp.write(ptb + "\n")
    print("wrote %s (%d examples)" % (amr_path, len(examples)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="data/synthetic")
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    train, dev, test, overfit = build(args.seed)
    write_split(args.out_dir, "train", "train", train)
    write_split(args.out_dir, "dev", "dev", dev)
    write_split(args.out_dir, "test", "test", test)
    write_split(args.out_dir, "overfit50", "ov", overfit)


if __name__ == "__main__":
    main()
