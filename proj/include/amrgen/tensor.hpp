// Dense tensor values and a reverse-mode autodiff tape, backed by Eigen.
//
// The tape records one node per executed op.  Values are Eigen matrices
// (column vectors for rank-1 data).  backward() walks the tape in reverse
// creation order and accumulates gradients additively, so fan-out works
// without any bookkeeping on the caller's side.  Parameters live outside
// the tape in a ParamStore and receive their gradients through leaf nodes.
//
// Tapes are single-owner and append-only; independent tapes may run on
// separate threads.  Values are never mutated after creation.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace amrgen {

#ifdef AMRGEN_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

template <class Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mat = MatT<Real>;
using Vec = VecT<Real>;

using Rng = std::mt19937_64;

// Keep = 1, dropped / unattendable = 0.
using MaskVec = std::vector<std::uint8_t>;

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// Parameters

template <class Scalar>
struct ParameterT {
  std::string name;
  MatT<Scalar> value;
  MatT<Scalar> grad;
  // ADAM first/second moments, allocated lazily by the optimizer.
  MatT<Scalar> adam_m, adam_v;

  ParameterT(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(MatT<Scalar>::Zero(rows, cols)),
        grad(MatT<Scalar>::Zero(rows, cols)) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  void zero_grad() { grad.setZero(); }

  void init_uniform(Rng& rng, Scalar range) {
    std::uniform_real_distribution<double> d(-double(range), double(range));
    for (Eigen::Index j = 0; j < value.cols(); ++j)
      for (Eigen::Index i = 0; i < value.rows(); ++i)
        value(i, j) = Scalar(d(rng));
  }
  void init_const(Scalar v) { value.setConstant(v); }
};

template <class Scalar>
class ParamStoreT {
 public:
  ParameterT<Scalar>* add(const std::string& name, Eigen::Index rows,
                          Eigen::Index cols) {
    if (index_.count(name))
      throw TensorError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<ParameterT<Scalar>>(name, rows, cols));
    index_[name] = params_.size() - 1;
    return params_.back().get();
  }

  ParameterT<Scalar>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  ParameterT<Scalar>* get(const std::string& name) const {
    auto* p = find(name);
    if (!p) throw TensorError("missing parameter: " + name);
    return p;
  }

  std::vector<ParameterT<Scalar>*> all() const {
    std::vector<ParameterT<Scalar>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::size_t size() const { return params_.size(); }
  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<ParameterT<Scalar>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Tape

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

template <class Scalar>
class TapeT {
 public:
  using M = MatT<Scalar>;
  using BackFn = std::function<void(TapeT&)>;

  struct Node {
    M val;
    const M* ref = nullptr;  // set for parameter leaves; val stays empty
    M grad;                  // empty until touched by backward
    BackFn back;             // empty for plain leaves
  };

  Var leaf(M v) {
    nodes_.push_back(Node{std::move(v), nullptr, M(), BackFn()});
    return Var{std::int32_t(nodes_.size() - 1)};
  }

  // Parameter leaf: the node aliases p.value and routes gradient into p.grad.
  // Repeated calls for the same parameter return the same node.
  Var param(ParameterT<Scalar>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Var v{std::int32_t(nodes_.size())};
    ParameterT<Scalar>* pp = &p;
    nodes_.push_back(Node{M(), &p.value, M(),
                          [pp, v](TapeT& t) { pp->grad += t.grad(v); }});
    param_nodes_[&p] = v;
    return v;
  }

  // id of the node about to be pushed; lets op lambdas capture their output.
  Var next() const { return Var{std::int32_t(nodes_.size())}; }

  Var push(M v, BackFn back) {
    nodes_.push_back(Node{std::move(v), nullptr, M(), std::move(back)});
    return Var{std::int32_t(nodes_.size() - 1)};
  }

  const M& value(Var v) const {
    const Node& n = node(v);
    return n.ref ? *n.ref : n.val;
  }

  // Gradient buffer, zero-allocated on first touch.  Allocation doubles as
  // the reachability mark for the backward sweep.
  M& grad(Var v) {
    Node& n = nodes_.at(std::size_t(v.id));
    if (n.grad.size() == 0) {
      const M& val = n.ref ? *n.ref : n.val;
      n.grad = M::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  bool grad_touched(Var v) const { return node(v).grad.size() != 0; }

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse creation
  // order.  root must be 1x1.  Nodes not on a path to root keep an empty
  // gradient and are skipped.
  void backward(Var root) {
    if (!root.valid()) throw TensorError("backward on invalid Var");
    const M& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1)
      throw TensorError("backward root must be scalar, got " +
                        shape_str(rv.rows(), rv.cols()));
    grad(root)(0, 0) = Scalar(1);
    for (std::int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[std::size_t(i)];
      if (n.grad.size() != 0 && n.back) n.back(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  const Node& node(Var v) const { return nodes_.at(std::size_t(v.id)); }

  std::vector<Node> nodes_;
  std::unordered_map<const void*, Var> param_nodes_;
};

using Tape = TapeT<Real>;
using Parameter = ParameterT<Real>;
using ParamStore = ParamStoreT<Real>;

// ---------------------------------------------------------------------------
// Ops.  Each returns a new tape node; gradients flow to every input.

template <class Scalar>
Var matmul(TapeT<Scalar>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.cols() != B.rows())
    throw TensorError("matmul: inner dimensions disagree, " +
                      shape_str(A.rows(), A.cols()) + " * " +
                      shape_str(B.rows(), B.cols()));
  Var out = t.next();
  return t.push(A * B, [a, b, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(out);
    t.grad(a) += g * t.value(b).transpose();
    t.grad(b) += t.value(a).transpose() * g;
  });
}

// a^T * b without materializing the transpose.
template <class Scalar>
Var matmul_tn(TapeT<Scalar>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.rows() != B.rows())
    throw TensorError("matmul_tn: leading dimensions disagree, " +
                      shape_str(A.rows(), A.cols()) + "^T * " +
                      shape_str(B.rows(), B.cols()));
  Var out = t.next();
  return t.push(A.transpose() * B, [a, b, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(out);
    t.grad(a) += t.value(b) * g.transpose();
    t.grad(b) += t.value(a) * g;
  });
}

namespace detail {
template <class Scalar>
inline void check_same_shape(const MatT<Scalar>& A, const MatT<Scalar>& B,
                             const char* op) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw TensorError(std::string(op) + ": shape mismatch, " +
                      shape_str(A.rows(), A.cols()) + " vs " +
                      shape_str(B.rows(), B.cols()));
}
}  // namespace detail

template <class Scalar>
Var add(TapeT<Scalar>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  detail::check_same_shape<Scalar>(A, B, "add");
  Var out = t.next();
  return t.push(A + B, [a, b, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(out);
    t.grad(a) += g;
    t.grad(b) += g;
  });
}

template <class Scalar>
Var sub(TapeT<Scalar>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  detail::check_same_shape<Scalar>(A, B, "sub");
  Var out = t.next();
  return t.push(A - B, [a, b, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(out);
    t.grad(a) += g;
    t.grad(b) -= g;
  });
}

// Elementwise product.
template <class Scalar>
Var cmul(TapeT<Scalar>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  detail::check_same_shape<Scalar>(A, B, "cmul");
  Var out = t.next();
  return t.push(A.cwiseProduct(B), [a, b, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(out);
    t.grad(a) += g.cwiseProduct(t.value(b));
    t.grad(b) += g.cwiseProduct(t.value(a));
  });
}

template <class Scalar>
Var scale(TapeT<Scalar>& t, Var a, Scalar s) {
  Var out = t.next();
  return t.push(t.value(a) * s, [a, s, out](TapeT<Scalar>& t) {
    t.grad(a) += t.grad(out) * s;
  });
}

// x * s with s a 1x1 tape value (broadcast scalar).
template <class Scalar>
Var scale_by(TapeT<Scalar>& t, Var x, Var s) {
  const auto& S = t.value(s);
  if (S.rows() != 1 || S.cols() != 1)
    throw TensorError("scale_by: scale must be 1x1, got " +
                      shape_str(S.rows(), S.cols()));
  Var out = t.next();
  return t.push(t.value(x) * S(0, 0), [x, s, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(out);
    t.grad(x) += g * t.value(s)(0, 0);
    t.grad(s)(0, 0) += g.cwiseProduct(t.value(x)).sum();
  });
}

// 1 - x elementwise.
template <class Scalar>
Var one_minus(TapeT<Scalar>& t, Var x) {
  Var out = t.next();
  MatT<Scalar> v =
      MatT<Scalar>::Constant(t.value(x).rows(), t.value(x).cols(), Scalar(1)) -
      t.value(x);
  return t.push(std::move(v), [x, out](TapeT<Scalar>& t) {
    t.grad(x) -= t.grad(out);
  });
}

template <class Scalar>
Var tanh_op(TapeT<Scalar>& t, Var x) {
  Var out = t.next();
  return t.push(t.value(x).array().tanh().matrix(),
                [x, out](TapeT<Scalar>& t) {
                  const MatT<Scalar>& y = t.value(out);
                  t.grad(x) += t.grad(out).cwiseProduct(
                      (MatT<Scalar>::Constant(y.rows(), y.cols(), Scalar(1)) -
                       y.cwiseProduct(y)));
                });
}

namespace detail {
// Saturates exactly to 0 / 1 in floating point for large |x|.
template <class Scalar>
inline Scalar stable_sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}
}  // namespace detail

template <class Scalar>
Var sigmoid_op(TapeT<Scalar>& t, Var x) {
  Var out = t.next();
  MatT<Scalar> y = t.value(x).unaryExpr(
      [](Scalar v) { return detail::stable_sigmoid(v); });
  return t.push(std::move(y), [x, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& y = t.value(out);
    t.grad(x) += t.grad(out).cwiseProduct(y.cwiseProduct(
        MatT<Scalar>::Constant(y.rows(), y.cols(), Scalar(1)) - y));
  });
}

template <class Scalar>
Var log_op(TapeT<Scalar>& t, Var x) {
  Var out = t.next();
  return t.push(t.value(x).array().log().matrix(),
                [x, out](TapeT<Scalar>& t) {
                  t.grad(x) += t.grad(out).cwiseQuotient(t.value(x));
                });
}

template <class Scalar>
Var neg(TapeT<Scalar>& t, Var x) {
  return scale(t, x, Scalar(-1));
}

template <class Scalar>
Var sum(TapeT<Scalar>& t, Var x) {
  Var out = t.next();
  MatT<Scalar> v(1, 1);
  v(0, 0) = t.value(x).sum();
  return t.push(std::move(v), [x, out](TapeT<Scalar>& t) {
    t.grad(x).array() += t.grad(out)(0, 0);
  });
}

// Row r of a column vector, as 1x1.
template <class Scalar>
Var pick(TapeT<Scalar>& t, Var x, Eigen::Index row) {
  const auto& X = t.value(x);
  if (X.cols() != 1)
    throw TensorError("pick: expected column vector, got " +
                      shape_str(X.rows(), X.cols()));
  if (row < 0 || row >= X.rows())
    throw TensorError("pick: row out of range");
  Var out = t.next();
  MatT<Scalar> v(1, 1);
  v(0, 0) = X(row, 0);
  return t.push(std::move(v), [x, row, out](TapeT<Scalar>& t) {
    t.grad(x)(row, 0) += t.grad(out)(0, 0);
  });
}

// Vertical stack of column vectors (or same-width matrices).
template <class Scalar>
Var concat_rows(TapeT<Scalar>& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw TensorError("concat_rows: empty input");
  Eigen::Index rows = 0, cols = t.value(xs[0]).cols();
  for (Var v : xs) {
    if (t.value(v).cols() != cols)
      throw TensorError("concat_rows: column count mismatch");
    rows += t.value(v).rows();
  }
  MatT<Scalar> out(rows, cols);
  Eigen::Index at = 0;
  for (Var v : xs) {
    out.middleRows(at, t.value(v).rows()) = t.value(v);
    at += t.value(v).rows();
  }
  Var o = t.next();
  return t.push(std::move(out), [xs, o](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(o);
    Eigen::Index at = 0;
    for (Var v : xs) {
      Eigen::Index r = t.value(v).rows();
      t.grad(v) += g.middleRows(at, r);
      at += r;
    }
  });
}

// Horizontal stack of column vectors into a matrix.
template <class Scalar>
Var concat_cols(TapeT<Scalar>& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw TensorError("concat_cols: empty input");
  Eigen::Index rows = t.value(xs[0]).rows();
  for (Var v : xs)
    if (t.value(v).rows() != rows || t.value(v).cols() != 1)
      throw TensorError("concat_cols: inputs must be equal-length vectors");
  MatT<Scalar> out(rows, Eigen::Index(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) out.col(Eigen::Index(i)) = t.value(xs[i]);
  Var o = t.next();
  return t.push(std::move(out), [xs, o](TapeT<Scalar>& t) {
    const MatT<Scalar>& g = t.grad(o);
    for (std::size_t i = 0; i < xs.size(); ++i)
      t.grad(xs[i]) += g.col(Eigen::Index(i));
  });
}

template <class Scalar>
Var slice_rows(TapeT<Scalar>& t, Var x, Eigen::Index start, Eigen::Index len) {
  const auto& X = t.value(x);
  if (start < 0 || len < 0 || start + len > X.rows())
    throw TensorError("slice_rows: range out of bounds");
  Var out = t.next();
  return t.push(MatT<Scalar>(X.middleRows(start, len)),
                [x, start, len, out](TapeT<Scalar>& t) {
                  t.grad(x).middleRows(start, len) += t.grad(out);
                });
}

// Zero-pad a column vector at the bottom to total_rows.
template <class Scalar>
Var pad_rows(TapeT<Scalar>& t, Var x, Eigen::Index total_rows) {
  const auto& X = t.value(x);
  if (X.cols() != 1) throw TensorError("pad_rows: expected column vector");
  if (total_rows < X.rows()) throw TensorError("pad_rows: target too small");
  MatT<Scalar> v = MatT<Scalar>::Zero(total_rows, 1);
  v.topRows(X.rows()) = X;
  Var out = t.next();
  Eigen::Index n = X.rows();
  return t.push(std::move(v), [x, n, out](TapeT<Scalar>& t) {
    t.grad(x) += t.grad(out).topRows(n);
  });
}

// out[ids[i]] += w[i]; duplicate ids accumulate.
template <class Scalar>
Var scatter_sum(TapeT<Scalar>& t, Var w, std::vector<Eigen::Index> ids,
                Eigen::Index out_rows) {
  const auto& W = t.value(w);
  if (W.cols() != 1) throw TensorError("scatter_sum: expected column vector");
  if (Eigen::Index(ids.size()) != W.rows())
    throw TensorError("scatter_sum: id count mismatch");
  MatT<Scalar> v = MatT<Scalar>::Zero(out_rows, 1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= out_rows)
      throw TensorError("scatter_sum: id out of range");
    v(ids[i], 0) += W(Eigen::Index(i), 0);
  }
  Var out = t.next();
  return t.push(std::move(v),
                [w, ids = std::move(ids), out](TapeT<Scalar>& t) {
                  const MatT<Scalar>& g = t.grad(out);
                  MatT<Scalar>& gw = t.grad(w);
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    gw(Eigen::Index(i), 0) += g(ids[i], 0);
                });
}

// Masked, max-subtracted softmax over a column vector.  Masked positions get
// probability exactly 0 and receive zero gradient.
template <class Scalar>
Var softmax(TapeT<Scalar>& t, Var x, const MaskVec* mask = nullptr) {
  const auto& X = t.value(x);
  if (X.cols() != 1)
    throw TensorError("softmax: expected column vector, got " +
                      shape_str(X.rows(), X.cols()));
  const Eigen::Index n = X.rows();
  if (mask && Eigen::Index(mask->size()) != n)
    throw TensorError("softmax: mask length mismatch");
  Scalar mx = Scalar(0);
  bool any = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask && !(*mask)[std::size_t(i)]) continue;
    if (!any || X(i, 0) > mx) mx = X(i, 0);
    any = true;
  }
  if (!any) throw TensorError("softmax: all positions masked");
  MatT<Scalar> p = MatT<Scalar>::Zero(n, 1);
  Scalar z = Scalar(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask && !(*mask)[std::size_t(i)]) continue;
    Scalar e = std::exp(X(i, 0) - mx);
    p(i, 0) = e;
    z += e;
  }
  p /= z;
  Var out = t.next();
  return t.push(std::move(p), [x, out](TapeT<Scalar>& t) {
    const MatT<Scalar>& p = t.value(out);
    const MatT<Scalar>& g = t.grad(out);
    Scalar dot = p.cwiseProduct(g).sum();
    // p is exactly 0 at masked positions, so they receive zero gradient.
    t.grad(x) += p.cwiseProduct(
        g - MatT<Scalar>::Constant(g.rows(), 1, dot));
  });
}

// (x - mean) / sqrt(var + eps) * gain + bias over a column vector.
template <class Scalar>
Var layer_norm(TapeT<Scalar>& t, Var x, Var gain, Var bias) {
  const auto& X = t.value(x);
  const auto& G = t.value(gain);
  const auto& B = t.value(bias);
  if (X.cols() != 1) throw TensorError("layer_norm: expected column vector");
  detail::check_same_shape<Scalar>(X, G, "layer_norm(gain)");
  detail::check_same_shape<Scalar>(X, B, "layer_norm(bias)");
  const Eigen::Index n = X.rows();
  Scalar mu = X.mean();
  MatT<Scalar> d = X.array() - mu;
  Scalar var = d.cwiseProduct(d).sum() / Scalar(n);
  Scalar sd = std::sqrt(var + Scalar(kLayerNormEps));
  MatT<Scalar> y = d / sd;
  Var out = t.next();
  // cache y and sd through an extra leaf-free capture
  auto yc = std::make_shared<MatT<Scalar>>(y);
  return t.push(G.cwiseProduct(y) + B,
                [x, gain, bias, out, yc, sd](TapeT<Scalar>& t) {
                  const MatT<Scalar>& g = t.grad(out);
                  const MatT<Scalar>& y = *yc;
                  const Eigen::Index n = y.rows();
                  t.grad(bias) += g;
                  t.grad(gain) += g.cwiseProduct(y);
                  MatT<Scalar> gy = g.cwiseProduct(t.value(gain));
                  Scalar m1 = gy.mean();
                  Scalar m2 = gy.cwiseProduct(y).mean();
                  t.grad(x) +=
                      (gy.array() - m1 - y.array() * m2).matrix() / sd;
                });
}

// Inverted dropout with an externally supplied 0/1 keep mask.  Kept entries
// are scaled by 1/(1-rate); rate 0 is the identity.
template <class Scalar>
Var dropout_fixed(TapeT<Scalar>& t, Var x, const MatT<Scalar>& keep01,
                  Scalar rate) {
  if (!(rate >= Scalar(0)) || rate >= Scalar(1))
    throw TensorError("dropout: rate must be in [0, 1)");
  const auto& X = t.value(x);
  if (rate == Scalar(0)) return x;
  detail::check_same_shape<Scalar>(X, keep01, "dropout(mask)");
  auto scaled = std::make_shared<MatT<Scalar>>(keep01 / (Scalar(1) - rate));
  Var out = t.next();
  return t.push(X.cwiseProduct(*scaled), [x, scaled, out](TapeT<Scalar>& t) {
    t.grad(x) += t.grad(out).cwiseProduct(*scaled);
  });
}

template <class Scalar>
MatT<Scalar> bernoulli_keep_mask(Eigen::Index rows, Eigen::Index cols,
                                 Scalar rate, Rng& rng) {
  if (!(rate >= Scalar(0)) || rate >= Scalar(1))
    throw TensorError("dropout: rate must be in [0, 1)");
  std::uniform_real_distribution<double> d(0.0, 1.0);
  MatT<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = d(rng) < double(rate) ? Scalar(0) : Scalar(1);
  return m;
}

template <class Scalar>
Var dropout(TapeT<Scalar>& t, Var x, Scalar rate, Rng& rng) {
  if (rate == Scalar(0)) return x;
  const auto& X = t.value(x);
  return dropout_fixed(t, x, bernoulli_keep_mask<Scalar>(X.rows(), X.cols(), rate, rng),
                       rate);
}

// Embedding row lookup: returns table.row(row) as a column vector and routes
// the gradient straight into the parameter without a whole-table node.
template <class Scalar>
Var lookup(TapeT<Scalar>& t, ParameterT<Scalar>& table, Eigen::Index row) {
  if (row < 0 || row >= table.rows())
    throw TensorError("lookup: row " + std::to_string(row) +
                      " out of range for " + table.name);
  Var out = t.next();
  ParameterT<Scalar>* p = &table;
  return t.push(table.value.row(row).transpose(),
                [p, row, out](TapeT<Scalar>& t) {
                  p->grad.row(row) += t.grad(out).transpose();
                });
}

// Convenience: W x + b.
template <class Scalar>
Var affine(TapeT<Scalar>& t, Var W, Var x, Var b) {
  return add(t, matmul(t, W, x), b);
}

// ---------------------------------------------------------------------------
// ADAM with bias correction, plus global gradient-norm clipping.

template <class Scalar>
struct AdamConfigT {
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

using AdamConfig = AdamConfigT<Real>;

template <class Scalar>
class AdamT {
 public:
  void step(ParamStoreT<Scalar>& ps, const AdamConfigT<Scalar>& cfg) {
    ++t_;
    const Scalar bc1 = Scalar(1) - std::pow(cfg.beta1, Scalar(t_));
    const Scalar bc2 = Scalar(1) - std::pow(cfg.beta2, Scalar(t_));
    for (auto* p : ps.all()) {
      if (p->adam_m.size() == 0) {
        p->adam_m = MatT<Scalar>::Zero(p->rows(), p->cols());
        p->adam_v = MatT<Scalar>::Zero(p->rows(), p->cols());
      }
      p->adam_m = cfg.beta1 * p->adam_m + (Scalar(1) - cfg.beta1) * p->grad;
      p->adam_v = cfg.beta2 * p->adam_v.array().matrix() +
                  (Scalar(1) - cfg.beta2) * p->grad.cwiseProduct(p->grad);
      MatT<Scalar> mhat = p->adam_m / bc1;
      MatT<Scalar> vhat = p->adam_v / bc2;
      p->value.array() -=
          cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  std::int64_t t_ = 0;
};

using Adam = AdamT<Real>;

template <class Scalar>
Scalar clip_grad_norm(ParamStoreT<Scalar>& ps, Scalar max_norm) {
  double sq = 0;
  for (auto* p : ps.all()) sq += double(p->grad.squaredNorm());
  Scalar norm = Scalar(std::sqrt(sq));
  if (norm > max_norm && norm > Scalar(0)) {
    Scalar f = max_norm / norm;
    for (auto* p : ps.all()) p->grad *= f;
  }
  return norm;
}

}  // namespace amrgen
