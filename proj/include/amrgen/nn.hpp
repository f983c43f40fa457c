// Recurrent building blocks on top of the tape: a layer-normalized LSTM
// cell, stacked unidirectional/bidirectional runners, dot-product attention
// and small helpers shared by the encoder and both decoders.
//
// Normalization scheme: layer norm (learned gain/bias) is applied to each
// gate pre-activation block inside the LSTM cell and to every other linear
// transform that feeds a tanh (output layers, decoder-init projections,
// gate-MLP hidden layer).  The final logit products are left un-normalized.

#pragma once

#include "amrgen/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace amrgen {

// Gate order inside the packed 4h pre-activation block: i, f, g, o.
template <class Scalar>
struct LstmCellPT {
  ParameterT<Scalar>* Wx = nullptr;  // [4h x in]
  ParameterT<Scalar>* Wh = nullptr;  // [4h x h]
  ParameterT<Scalar>* ln_gain[4] = {nullptr, nullptr, nullptr, nullptr};
  ParameterT<Scalar>* ln_bias[4] = {nullptr, nullptr, nullptr, nullptr};
  Eigen::Index in_dim = 0, hidden = 0;
};

using LstmCellP = LstmCellPT<Real>;

template <class Scalar>
LstmCellPT<Scalar> make_lstm_cell(ParamStoreT<Scalar>& ps,
                                  const std::string& prefix,
                                  Eigen::Index in_dim, Eigen::Index hidden) {
  LstmCellPT<Scalar> c;
  c.in_dim = in_dim;
  c.hidden = hidden;
  auto get = [&](const std::string& name, Eigen::Index r, Eigen::Index co) {
    if (auto* p = ps.find(name)) return p;
    return ps.add(name, r, co);
  };
  c.Wx = get(prefix + ".Wx", 4 * hidden, in_dim);
  c.Wh = get(prefix + ".Wh", 4 * hidden, hidden);
  static const char* gate[4] = {"i", "f", "g", "o"};
  for (int k = 0; k < 4; ++k) {
    c.ln_gain[k] = get(prefix + ".ln_g." + gate[k], hidden, 1);
    c.ln_bias[k] = get(prefix + ".ln_b." + gate[k], hidden, 1);
  }
  return c;
}

struct LstmState {
  Var h, c;
};

// One step.  rec_keep, when given, is a 0/1 mask tied across timesteps
// (variational recurrent dropout on h_{t-1}).
template <class Scalar>
LstmState lstm_step(TapeT<Scalar>& t, const LstmCellPT<Scalar>& p, Var x,
                    const LstmState& prev, const MatT<Scalar>* rec_keep,
                    Scalar rec_rate) {
  Var h = prev.h;
  if (rec_keep && rec_rate > Scalar(0))
    h = dropout_fixed(t, h, *rec_keep, rec_rate);
  Var pre = add(t, matmul(t, t.param(*p.Wx), x), matmul(t, t.param(*p.Wh), h));
  Var u[4];
  for (int k = 0; k < 4; ++k) {
    Var blk = slice_rows(t, pre, k * p.hidden, p.hidden);
    u[k] = layer_norm(t, blk, t.param(*p.ln_gain[k]), t.param(*p.ln_bias[k]));
  }
  Var i = sigmoid_op(t, u[0]);
  Var f = sigmoid_op(t, u[1]);
  Var g = tanh_op(t, u[2]);
  Var o = sigmoid_op(t, u[3]);
  Var c = add(t, cmul(t, f, prev.c), cmul(t, i, g));
  Var hn = cmul(t, o, tanh_op(t, c));
  return LstmState{hn, c};
}

template <class Scalar>
LstmState lstm_step(TapeT<Scalar>& t, const LstmCellPT<Scalar>& p, Var x,
                    const LstmState& prev) {
  return lstm_step(t, p, x, prev, static_cast<const MatT<Scalar>*>(nullptr),
                   Scalar(0));
}

template <class Scalar>
LstmState lstm_zero_state(TapeT<Scalar>& t, Eigen::Index hidden) {
  Var z = t.leaf(MatT<Scalar>::Zero(hidden, 1));
  return LstmState{z, z};
}

// ---------------------------------------------------------------------------
// Stacked LSTM (decoder side): layer l consumes layer l-1's output.

template <class Scalar>
struct StackedLstmPT {
  std::vector<LstmCellPT<Scalar>> layers;
};

using StackedLstmP = StackedLstmPT<Real>;

template <class Scalar>
StackedLstmPT<Scalar> make_stacked_lstm(ParamStoreT<Scalar>& ps,
                                        const std::string& prefix,
                                        Eigen::Index in_dim,
                                        Eigen::Index hidden, int layers) {
  StackedLstmPT<Scalar> s;
  for (int l = 0; l < layers; ++l)
    s.layers.push_back(make_lstm_cell(ps, prefix + ".l" + std::to_string(l),
                                      l == 0 ? in_dim : hidden, hidden));
  return s;
}

// Per-sequence dropout context: one tied recurrent keep-mask per layer, plus
// the non-recurrent rate applied fresh at every connection.
template <class Scalar>
struct DropoutCtxT {
  Scalar rate = 0;      // non-recurrent
  Scalar rec_rate = 0;  // recurrent, tied across timesteps
  std::vector<MatT<Scalar>> rec_keep;  // one [h x 1] mask per layer
  Rng* rng = nullptr;
  bool active() const { return rng != nullptr; }
};

using DropoutCtx = DropoutCtxT<Real>;

template <class Scalar>
DropoutCtxT<Scalar> make_dropout_ctx(Scalar rate, Scalar rec_rate,
                                     Eigen::Index hidden, int layers,
                                     Rng* rng) {
  DropoutCtxT<Scalar> d;
  d.rate = rate;
  d.rec_rate = rec_rate;
  d.rng = rng;
  if (rng && rec_rate > Scalar(0))
    for (int l = 0; l < layers; ++l)
      d.rec_keep.push_back(
          bernoulli_keep_mask<Scalar>(hidden, 1, rec_rate, *rng));
  return d;
}

template <class Scalar>
Var nonrec_dropout(TapeT<Scalar>& t, Var x, const DropoutCtxT<Scalar>& d) {
  if (!d.active() || d.rate <= Scalar(0)) return x;
  return dropout(t, x, d.rate, *d.rng);
}

// One stacked step; states are per-layer.  Inter-layer inputs get fresh
// non-recurrent dropout.
template <class Scalar>
std::vector<LstmState> stacked_step(TapeT<Scalar>& t,
                                    const StackedLstmPT<Scalar>& p, Var x,
                                    const std::vector<LstmState>& prev,
                                    const DropoutCtxT<Scalar>& drop) {
  std::vector<LstmState> next;
  Var in = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (l > 0) in = nonrec_dropout(t, in, drop);
    const MatT<Scalar>* rk =
        (drop.active() && l < drop.rec_keep.size()) ? &drop.rec_keep[l]
                                                    : nullptr;
    LstmState s = lstm_step(t, p.layers[l], in, prev[l], rk, drop.rec_rate);
    next.push_back(s);
    in = s.h;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Stacked bidirectional encoder.  Layer l runs forward and backward LSTMs
// over layer l-1's per-position outputs; positions emit [fwd; bwd] (2h).

template <class Scalar>
struct BiEncoderPT {
  std::vector<LstmCellPT<Scalar>> fwd, bwd;
  Eigen::Index hidden = 0;
};

using BiEncoderP = BiEncoderPT<Real>;

template <class Scalar>
BiEncoderPT<Scalar> make_bi_encoder(ParamStoreT<Scalar>& ps,
                                    const std::string& prefix,
                                    Eigen::Index in_dim, Eigen::Index hidden,
                                    int layers) {
  BiEncoderPT<Scalar> e;
  e.hidden = hidden;
  for (int l = 0; l < layers; ++l) {
    Eigen::Index in = l == 0 ? in_dim : 2 * hidden;
    e.fwd.push_back(make_lstm_cell(
        ps, prefix + ".l" + std::to_string(l) + ".fwd", in, hidden));
    e.bwd.push_back(make_lstm_cell(
        ps, prefix + ".l" + std::to_string(l) + ".bwd", in, hidden));
  }
  return e;
}

// Encoder run result: per-position contexts c_i (2h), the same contexts
// packed as columns of C, and final [fwd;bwd] h/c per layer for decoder init.
struct EncRun {
  std::vector<Var> ctx;
  Var C;  // [2h x n]
  std::vector<Var> final_h;  // per layer, [2h x 1]
  std::vector<Var> final_c;
  Eigen::Index n = 0;
};

template <class Scalar>
EncRun run_bi_encoder(TapeT<Scalar>& t, const BiEncoderPT<Scalar>& p,
                      const std::vector<Var>& inputs,
                      const DropoutCtxT<Scalar>& drop) {
  if (inputs.empty()) throw TensorError("encoder: empty input sequence");
  const std::size_t n = inputs.size();
  EncRun run;
  run.n = Eigen::Index(n);
  std::vector<Var> layer_in = inputs;
  for (std::size_t l = 0; l < p.fwd.size(); ++l) {
    std::vector<Var> xs;
    xs.reserve(n);
    for (Var v : layer_in) xs.push_back(nonrec_dropout(t, v, drop));
    // tied recurrent masks are drawn per direction per layer
    MatT<Scalar> rk_f, rk_b;
    bool rec = drop.active() && drop.rec_rate > Scalar(0);
    if (rec) {
      rk_f = bernoulli_keep_mask<Scalar>(p.hidden, 1, drop.rec_rate, *drop.rng);
      rk_b = bernoulli_keep_mask<Scalar>(p.hidden, 1, drop.rec_rate, *drop.rng);
    }
    std::vector<Var> fh(n), bh(n);
    LstmState sf = lstm_zero_state<Scalar>(t, p.hidden);
    for (std::size_t i = 0; i < n; ++i) {
      sf = lstm_step(t, p.fwd[l], xs[i], sf, rec ? &rk_f : nullptr,
                     drop.rec_rate);
      fh[i] = sf.h;
    }
    LstmState sb = lstm_zero_state<Scalar>(t, p.hidden);
    for (std::size_t i = n; i-- > 0;) {
      sb = lstm_step(t, p.bwd[l], xs[i], sb, rec ? &rk_b : nullptr,
                     drop.rec_rate);
      bh[i] = sb.h;
    }
    std::vector<Var> out(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = concat_rows(t, {fh[i], bh[i]});
    run.final_h.push_back(concat_rows(t, {sf.h, sb.h}));
    run.final_c.push_back(concat_rows(t, {sf.c, sb.c}));
    layer_in = std::move(out);
  }
  run.ctx = layer_in;
  run.C = concat_cols(t, run.ctx);
  return run;
}

// ---------------------------------------------------------------------------
// Dot-product attention: a_i = h^T W c_i, w = softmax(a), s = sum w_i c_i.

template <class Scalar>
struct AttentionPT {
  ParameterT<Scalar>* W = nullptr;  // [d_h x d_c]
};

using AttentionP = AttentionPT<Real>;

template <class Scalar>
AttentionPT<Scalar> make_attention(ParamStoreT<Scalar>& ps,
                                   const std::string& name, Eigen::Index d_h,
                                   Eigen::Index d_c) {
  AttentionPT<Scalar> a;
  if (auto* p = ps.find(name))
    a.W = p;
  else
    a.W = ps.add(name, d_h, d_c);
  return a;
}

struct AttnOut {
  Var weights;  // [n x 1]
  Var context;  // [d_c x 1]
};

template <class Scalar>
AttnOut attend(TapeT<Scalar>& t, const AttentionPT<Scalar>& p, Var h_prev,
               const EncRun& enc) {
  Var v = matmul_tn(t, t.param(*p.W), h_prev);  // W^T h  [d_c]
  Var a = matmul_tn(t, enc.C, v);               // C^T (W^T h)  [n]
  Var w = softmax(t, a);
  Var s = matmul(t, enc.C, w);
  return AttnOut{w, s};
}

// ---------------------------------------------------------------------------
// Layer-normed affine into tanh: tanh(LN(W x)).

template <class Scalar>
struct LnAffinePT {
  ParameterT<Scalar>* W = nullptr;
  ParameterT<Scalar>* g = nullptr;
  ParameterT<Scalar>* b = nullptr;
};

using LnAffineP = LnAffinePT<Real>;

template <class Scalar>
LnAffinePT<Scalar> make_ln_affine(ParamStoreT<Scalar>& ps,
                                  const std::string& prefix, Eigen::Index out,
                                  Eigen::Index in) {
  LnAffinePT<Scalar> p;
  auto get = [&](const std::string& n, Eigen::Index r, Eigen::Index c) {
    if (auto* q = ps.find(n)) return q;
    return ps.add(n, r, c);
  };
  p.W = get(prefix + ".W", out, in);
  p.g = get(prefix + ".ln_g", out, 1);
  p.b = get(prefix + ".ln_b", out, 1);
  return p;
}

template <class Scalar>
Var ln_affine_tanh(TapeT<Scalar>& t, const LnAffinePT<Scalar>& p, Var x) {
  Var z = matmul(t, t.param(*p.W), x);
  return tanh_op(t, layer_norm(t, z, t.param(*p.g), t.param(*p.b)));
}

}  // namespace amrgen
