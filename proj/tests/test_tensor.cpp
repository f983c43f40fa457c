#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "amrgen/nn.hpp"
#include "amrgen/tensor.hpp"
#include "gradcheck.hpp"

#include <cmath>
#include <random>

using namespace amrgen;
using amrgen::test::grad_check;

namespace {

Mat mat2(std::initializer_list<std::initializer_list<double>> rows) {
  Mat m(Eigen::Index(rows.size()), Eigen::Index(rows.begin()->size()));
  Eigen::Index i = 0;
  for (auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = Real(v);
    ++i;
  }
  return m;
}

Vec vec(std::initializer_list<double> xs) {
  Vec v(Eigen::Index(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = Real(x);
  return v;
}

}  // namespace

TEST_CASE("matmul basic values") {
  Tape t;
  Var id2 = t.leaf(Mat::Identity(2, 2));
  Var a = t.leaf(mat2({{1, 2}, {3, 4}}));
  Var r = matmul(t, id2, a);
  CHECK(t.value(r) == mat2({{1, 2}, {3, 4}}));

  Var b = t.leaf(mat2({{1, 0}}));
  Var c = t.leaf(mat2({{0}, {5}}));
  Var r2 = matmul(t, b, c);
  CHECK(t.value(r2)(0, 0) == 0);
}

TEST_CASE("matmul shape error names both shapes") {
  Tape t;
  Var a = t.leaf(Mat::Zero(2, 3));
  Var b = t.leaf(Mat::Zero(2, 2));
  try {
    matmul(t, a, b);
    FAIL("expected TensorError");
  } catch (const TensorError& e) {
    std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences (3x4 * 4x2)") {
  ParamStore ps;
  Rng rng(7);
  auto* a = ps.add("a", 3, 4);
  auto* b = ps.add("b", 4, 2);
  a->init_uniform(rng, Real(0.8));
  b->init_uniform(rng, Real(0.8));
  auto build = [&](Tape& t) {
    return sum(t, matmul(t, t.param(*a), t.param(*b)));
  };
  auto r = grad_check({a, b}, build);
  CHECK(r.ok(1e-5));
}

TEST_CASE("matmul_tn gradient") {
  ParamStore ps;
  Rng rng(9);
  auto* a = ps.add("a", 4, 3);
  auto* b = ps.add("b", 4, 2);
  a->init_uniform(rng, Real(0.8));
  b->init_uniform(rng, Real(0.8));
  auto build = [&](Tape& t) {
    return sum(t, tanh_op(t, matmul_tn(t, t.param(*a), t.param(*b))));
  };
  CHECK(grad_check({a, b}, build).ok(1e-4));
}

TEST_CASE("softmax symmetry and stability") {
  Tape t;
  Var p = softmax(t, t.leaf(vec({0, 0})));
  CHECK(t.value(p)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.value(p)(1, 0) == doctest::Approx(0.5).epsilon(1e-12));

  Var q = softmax(t, t.leaf(vec({1000, 0})));
  CHECK(std::isfinite(double(t.value(q)(0, 0))));
  CHECK(t.value(q)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.value(q)(1, 0) >= 0);
}

TEST_CASE("masked softmax renormalises and zeroes masked entries") {
  Tape t;
  MaskVec mask = {1, 0, 1};
  Var p = softmax(t, t.leaf(vec({1, 2, 3})), &mask);
  // direct computation over the unmasked positions
  double e1 = std::exp(1.0 - 3.0), e3 = std::exp(0.0);
  double z = e1 + e3;
  CHECK(double(t.value(p)(0, 0)) == doctest::Approx(e1 / z).epsilon(1e-12));
  CHECK(t.value(p)(1, 0) == 0.0);
  CHECK(double(t.value(p)(2, 0)) == doctest::Approx(e3 / z).epsilon(1e-12));
  CHECK(double(t.value(p).sum()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax sums to one within 1e-12 on random inputs") {
  Rng rng(11);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int it = 0; it < 50; ++it) {
    Tape t;
    Vec x(7);
    for (int i = 0; i < 7; ++i) x(i) = Real(d(rng));
    Var p = softmax(t, t.leaf(x));
    CHECK(std::abs(double(t.value(p).sum()) - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax with everything masked is an error") {
  Tape t;
  MaskVec mask = {0, 0};
  CHECK_THROWS_AS(softmax(t, t.leaf(vec({1, 2})), &mask), TensorError);
}

TEST_CASE("softmax gradient, masked and unmasked") {
  ParamStore ps;
  Rng rng(3);
  auto* x = ps.add("x", 6, 1);
  x->init_uniform(rng, Real(2));
  auto build = [&](Tape& t) {
    Var p = softmax(t, t.param(*x));
    return sum(t, cmul(t, p, p));  // nonlinear readout
  };
  CHECK(grad_check({x}, build).ok(1e-4));

  MaskVec mask = {1, 0, 1, 1, 0, 1};
  auto build_masked = [&](Tape& t) {
    Var p = softmax(t, t.param(*x), &mask);
    return sum(t, cmul(t, p, p));
  };
  CHECK(grad_check({x}, build_masked).ok(1e-4));
  // masked entries must also get zero input-gradient
  x->zero_grad();
  Tape t;
  Var p = softmax(t, t.param(*x), &mask);
  t.backward(sum(t, cmul(t, p, p)));
  CHECK(x->grad(1, 0) == 0.0);
  CHECK(x->grad(4, 0) == 0.0);
}

TEST_CASE("layer_norm fixed points") {
  Tape t;
  Var x = t.leaf(vec({3, 3, 3, 3}));
  Var g1 = t.leaf(vec({1, 1, 1, 1}));
  Var b0 = t.leaf(vec({0, 0, 0, 0}));
  Var y = layer_norm(t, x, g1, b0);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(double(t.value(y)(i, 0))) < 1e-9);

  Var x2 = t.leaf(vec({1, 2, 3, 4}));
  Var g0 = t.leaf(vec({0, 0, 0, 0}));
  Var b = t.leaf(vec({5, 6, 7, 8}));
  Var y2 = layer_norm(t, x2, g0, b);
  CHECK(t.value(y2) == t.value(b));
}

TEST_CASE("layer_norm gradient at n=7") {
  ParamStore ps;
  Rng rng(5);
  auto* x = ps.add("x", 7, 1);
  auto* g = ps.add("g", 7, 1);
  auto* b = ps.add("b", 7, 1);
  x->init_uniform(rng, Real(1.5));
  g->init_uniform(rng, Real(1.0));
  b->init_uniform(rng, Real(0.5));
  auto build = [&](Tape& t) {
    Var y = layer_norm(t, t.param(*x), t.param(*g), t.param(*b));
    return sum(t, tanh_op(t, y));
  };
  CHECK(grad_check({x, g, b}, build).ok(1e-5));
}

TEST_CASE("lstm cell zero weights and biases give zero h") {
  ParamStore ps;
  auto cell = make_lstm_cell(ps, "c", 3, 4);
  Tape t;
  Var x = t.leaf(Vec::Zero(3).eval());
  auto st = lstm_zero_state<Real>(t, 4);
  auto out = lstm_step(t, cell, t.leaf(vec({1, -2, 3})), st);
  (void)x;
  CHECK(t.value(out.h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm cell carries c when gates are saturated via biases") {
  ParamStore ps;
  Rng rng(13);
  auto cell = make_lstm_cell(ps, "c", 3, 4);
  cell.Wx->init_uniform(rng, Real(0.5));
  cell.Wh->init_uniform(rng, Real(0.5));
  for (int k = 0; k < 4; ++k) cell.ln_gain[k]->init_const(Real(1));
  cell.ln_bias[1]->init_const(Real(20));   // forget -> 1
  cell.ln_bias[0]->init_const(Real(-20));  // input -> 0
  Tape t;
  Vec c_prev = vec({0.3, -0.7, 1.1, 0.2});
  LstmState st{t.leaf(vec({0.1, 0.2, -0.1, 0.4})), t.leaf(c_prev)};
  auto out = lstm_step(t, cell, t.leaf(vec({1, 2, -1})), st);
  CHECK((t.value(out.c) - c_prev).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("lstm 3-step rollout gradient wrt all params") {
  ParamStore ps;
  Rng rng(21);
  auto cell = make_lstm_cell(ps, "c", 3, 4);
  for (auto* p : ps.all()) p->init_uniform(rng, Real(0.4));
  for (int k = 0; k < 4; ++k) cell.ln_gain[k]->value.array() += Real(1);
  std::vector<Vec> xs = {vec({1, 0.5, -1}), vec({-0.2, 0.3, 0.8}),
                         vec({0.1, -0.4, 0.9})};
  auto build = [&](Tape& t) {
    auto st = lstm_zero_state<Real>(t, 4);
    std::vector<Var> hs;
    for (auto& x : xs) {
      st = lstm_step(t, cell, t.leaf(x), st);
      hs.push_back(st.h);
    }
    return sum(t, concat_rows(t, hs));
  };
  CHECK(grad_check(ps.all(), build).ok(1e-4));
}

TEST_CASE("dropout identity, fixed-mask scaling and rate errors") {
  Tape t;
  Rng rng(5);
  Var x = t.leaf(vec({1, 2, 3, 4}));
  Var y = dropout(t, x, Real(0), rng);
  CHECK(t.value(y) == t.value(x));

  Mat keep = Mat::Ones(4, 1);
  Var z = dropout_fixed(t, x, keep, Real(0.5));
  CHECK(t.value(z) == Mat(2 * t.value(x)));

  CHECK_THROWS_AS(dropout(t, x, Real(1.0), rng), TensorError);
  CHECK_THROWS_AS(dropout(t, x, Real(1.5), rng), TensorError);
}

TEST_CASE("dropout empirical keep fraction") {
  Rng rng(99);
  const Real rate = Real(0.3);
  Mat m = bernoulli_keep_mask<Real>(100000, 1, rate, rng);
  double frac = double(m.sum()) / 100000.0;
  CHECK(std::abs(frac - 0.7) < 0.01);
}

TEST_CASE("adam zero gradient leaves params unchanged from fresh state") {
  ParamStore ps;
  auto* w = ps.add("w", 2, 2);
  w->value = mat2({{1, 2}, {3, 4}});
  Adam opt;
  AdamConfig cfg;
  opt.step(ps, cfg);
  CHECK(w->value == mat2({{1, 2}, {3, 4}}));
}

TEST_CASE("adam moments decay under zero gradient") {
  ParamStore ps;
  auto* w = ps.add("w", 1, 1);
  w->value(0, 0) = 1;
  Adam opt;
  AdamConfig cfg;
  w->grad(0, 0) = 1;
  opt.step(ps, cfg);
  Real m1 = w->adam_m(0, 0);
  w->zero_grad();
  opt.step(ps, cfg);
  CHECK(double(w->adam_m(0, 0)) == doctest::Approx(0.9 * double(m1)));
}

TEST_CASE("adam first step from fresh state moves by ~lr against the grad") {
  ParamStore ps;
  auto* w = ps.add("w", 1, 1);
  w->value(0, 0) = Real(0.7);
  w->grad(0, 0) = Real(1.0);
  Adam opt;
  AdamConfig cfg;
  cfg.lr = Real(0.01);
  opt.step(ps, cfg);
  // bias-corrected mhat = 1, vhat = 1 -> step = lr/(1+eps') ~= lr
  CHECK(double(w->value(0, 0)) == doctest::Approx(0.7 - 0.01).epsilon(1e-6));
}

TEST_CASE("adam drives w^2 toward zero in 100 steps") {
  ParamStore ps;
  auto* w = ps.add("w", 1, 1);
  w->value(0, 0) = Real(1.0);
  Adam opt;
  AdamConfig cfg;
  cfg.lr = Real(0.1);
  for (int i = 0; i < 100; ++i) {
    w->zero_grad();
    w->grad(0, 0) = 2 * w->value(0, 0);  // d/dw w^2
    opt.step(ps, cfg);
  }
  CHECK(std::abs(double(w->value(0, 0))) < 0.05);
}

TEST_CASE("diamond fan-out accumulates gradients additively") {
  ParamStore ps;
  auto* x = ps.add("x", 3, 1);
  x->value = vec({1, 2, 3});
  Tape t;
  Var xv = t.param(*x);
  Var u = scale(t, xv, Real(2));
  Var v = scale(t, xv, Real(5));
  Var z = sum(t, add(t, u, v));
  t.backward(z);
  for (int i = 0; i < 3; ++i) CHECK(double(x->grad(i, 0)) == 7.0);

  // shared nonlinear intermediate
  x->zero_grad();
  Tape t2;
  Var c = tanh_op(t2, t2.param(*x));
  Var z2 = sum(t2, cmul(t2, c, c));
  t2.backward(z2);
  for (int i = 0; i < 3; ++i) {
    double th = std::tanh(double(x->value(i, 0)));
    double expect = 2 * th * (1 - th * th);
    CHECK(double(x->grad(i, 0)) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("param node is deduplicated on one tape") {
  ParamStore ps;
  auto* x = ps.add("x", 2, 1);
  Tape t;
  Var a = t.param(*x);
  Var b = t.param(*x);
  CHECK(a.id == b.id);
}

TEST_CASE("composite expression gradient on randomized shapes") {
  Rng shape_rng(2024);
  for (int trial = 0; trial < 3; ++trial) {
    std::uniform_int_distribution<int> dim(2, 5);
    int m = dim(shape_rng), k = dim(shape_rng);
    ParamStore ps;
    Rng rng(100 + trial);
    auto* W = ps.add("W", m, k);
    auto* x = ps.add("x", k, 1);
    auto* g = ps.add("g", m, 1);
    auto* b = ps.add("b", m, 1);
    auto* s = ps.add("s", 1, 1);
    for (auto* p : ps.all()) p->init_uniform(rng, Real(0.9));
    auto build = [&](Tape& t) {
      Var h = layer_norm(t, matmul(t, t.param(*W), t.param(*x)), t.param(*g),
                         t.param(*b));
      Var p = softmax(t, sigmoid_op(t, h));
      Var top = slice_rows(t, p, 0, p.id >= 0 ? 2 : 2);
      Var mixed = add(t, scale_by(t, top, t.param(*s)),
                      scale_by(t, one_minus(t, top), t.param(*s)));
      Var padded = pad_rows(t, mixed, 4);
      Var scat = scatter_sum(t, padded, {1, 0, 3, 1}, 4);
      return sum(t, cmul(t, scat, scat));
    };
    CHECK(grad_check(ps.all(), build).ok(1e-4));
  }
}

TEST_CASE("lookup routes gradients into the embedding rows") {
  ParamStore ps;
  Rng rng(8);
  auto* E = ps.add("E", 5, 3);
  E->init_uniform(rng, Real(1));
  auto build = [&](Tape& t) {
    Var a = lookup(t, *E, 2);
    Var b = lookup(t, *E, 2);  // same row twice: fan-out through the table
    Var c = lookup(t, *E, 4);
    return sum(t, tanh_op(t, concat_rows(t, {a, b, c})));
  };
  CHECK(grad_check({E}, build).ok(1e-4));
  Tape t;
  CHECK_THROWS_AS(lookup(t, *E, 9), TensorError);
}

TEST_CASE("bi-encoder output length equals input length") {
  ParamStore ps;
  Rng rng(17);
  auto enc = make_bi_encoder(ps, "enc", 3, 4, 2);
  for (auto* p : ps.all()) p->init_uniform(rng, Real(0.3));
  std::uniform_int_distribution<int> len(1, 9);
  for (int trial = 0; trial < 20; ++trial) {
    int n = len(rng);
    Tape t;
    std::vector<Var> xs;
    for (int i = 0; i < n; ++i) {
      Vec v(3);
      for (int j = 0; j < 3; ++j)
        v(j) = Real(std::uniform_real_distribution<double>(-1, 1)(rng));
      xs.push_back(t.leaf(v));
    }
    DropoutCtx nodrop;
    EncRun run = run_bi_encoder(t, enc, xs, nodrop);
    CHECK(run.ctx.size() == std::size_t(n));
    CHECK(t.value(run.C).cols() == n);
    CHECK(t.value(run.ctx[0]).rows() == 8);  // 2h
  }
}

TEST_CASE("attend: uniform weights for identical contexts, single position") {
  ParamStore ps;
  Rng rng(23);
  auto att = make_attention(ps, "W_att", 4, 6);
  att.W->init_uniform(rng, Real(0.5));
  Tape t;
  Vec c(6);
  for (int i = 0; i < 6; ++i) c(i) = Real(0.1 * (i + 1));
  std::vector<Var> ctx = {t.leaf(c), t.leaf(c), t.leaf(c)};
  EncRun enc;
  enc.ctx = ctx;
  enc.C = concat_cols(t, ctx);
  enc.n = 3;
  Vec h(4);
  h << Real(0.3), Real(-0.2), Real(0.9), Real(0.1);
  AttnOut out = attend(t, att, t.leaf(h), enc);
  for (int i = 0; i < 3; ++i)
    CHECK(double(t.value(out.weights)(i, 0)) ==
          doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK((t.value(out.context) - c).cwiseAbs().maxCoeff() < 1e-12);

  EncRun enc1;
  enc1.ctx = {t.leaf(c)};
  enc1.C = concat_cols(t, enc1.ctx);
  enc1.n = 1;
  AttnOut out1 = attend(t, att, t.leaf(h), enc1);
  CHECK(t.value(out1.weights)(0, 0) == 1.0);
  CHECK(t.value(out1.context) == c);
}

TEST_CASE("attend gradient through a 5-position input") {
  ParamStore ps;
  Rng rng(29);
  auto att = make_attention(ps, "W_att", 3, 4);
  auto* h = ps.add("h", 3, 1);
  auto* ctx = ps.add("ctx", 4, 5);
  for (auto* p : ps.all()) p->init_uniform(rng, Real(0.8));
  auto build = [&](Tape& t) {
    EncRun enc;
    enc.C = t.param(*ctx);
    enc.n = 5;
    AttnOut out = attend(t, att, t.param(*h), enc);
    return sum(t, tanh_op(t, out.context));
  };
  CHECK(grad_check(ps.all(), build).ok(1e-4));
}

TEST_CASE("forward passes are deterministic under a fixed seed") {
  ParamStore ps;
  Rng rng(41);
  auto* x = ps.add("x", 10, 1);
  x->init_uniform(rng, Real(1));
  auto run_once = [&](uint64_t seed) {
    Rng r(seed);
    Tape t;
    Var y = dropout(t, t.param(*x), Real(0.5), r);
    return Mat(t.value(y));
  };
  CHECK(run_once(7) == run_once(7));
}
