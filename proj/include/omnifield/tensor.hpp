#pragma once

#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "omnifield/common.hpp"

namespace omnifield::ag {

template <class Scalar>
class Tape;

/// Dense 2-d value participating in reverse-mode differentiation. A tensor is
/// detached (pure value) unless it was produced by an op with at least one
/// attached input, or bound as a leaf on a tape.
template <class Scalar>
struct Tensor {
  MatX<Scalar> value;
  Tape<Scalar>* tape = nullptr;
  int node = -1;

  Tensor() = default;
  explicit Tensor(MatX<Scalar> v) : value(std::move(v)) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  Index size() const { return value.size(); }
  bool attached() const { return tape != nullptr; }

  Scalar scalar() const {
    if (rows() != 1 || cols() != 1) throw Error("shape", "scalar(): tensor is not 1x1");
    return value(0, 0);
  }

  /// Same value, off the tape. Detached tensors never accumulate gradients.
  Tensor detached() const { return Tensor(value); }
};

template <class Scalar>
Tensor<Scalar> constant(MatX<Scalar> v) {
  return Tensor<Scalar>(std::move(v));
}

template <class Scalar>
Tensor<Scalar> scalar_constant(Scalar v) {
  MatX<Scalar> m(1, 1);
  m(0, 0) = v;
  return Tensor<Scalar>(std::move(m));
}

/// Per-forward-pass recording of primitive ops in topological order.
/// Gradient buffers are keyed by node id; backward may run exactly once.
template <class Scalar>
class Tape {
 public:
  using Grad = MatX<Scalar>;
  using BackFn = std::function<void(Tape&, const Grad&)>;

  explicit Tape(bool strict_finite = false) : strict_(strict_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Binds a value as a differentiable input of this pass.
  Tensor<Scalar> leaf(const MatX<Scalar>& v) {
    check_finite(v, "leaf");
    Tensor<Scalar> t(v);
    t.tape = this;
    t.node = add_node(v.rows(), v.cols(), nullptr);
    return t;
  }

  int add_node(Index rows, Index cols, BackFn back) {
    if (ran_backward_)
      throw Error("state", "tape already consumed by backward; record on a fresh tape");
    nodes_.push_back(Node{rows, cols, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accumulate(int node, const Grad& g) {
    Grad& slot = grads_[static_cast<std::size_t>(node)];
    if (slot.size() == 0)
      slot = g;
    else
      slot += g;
  }

  void backward(const Tensor<Scalar>& loss) {
    if (!loss.attached() || loss.tape != this)
      throw Error("value", "backward: loss is detached or recorded on a different tape");
    if (loss.rows() != 1 || loss.cols() != 1)
      throw Error("shape", "backward: loss must be a 1x1 scalar");
    if (ran_backward_) throw Error("state", "backward already ran; re-record the forward pass");
    ran_backward_ = true;
    grads_.assign(nodes_.size(), Grad());
    grads_[static_cast<std::size_t>(loss.node)] = Grad::Ones(1, 1);
    for (int i = loss.node; i >= 0; --i) {
      const auto& slot = grads_[static_cast<std::size_t>(i)];
      if (slot.size() == 0) continue;  // not on the loss path
      if (nodes_[static_cast<std::size_t>(i)].back) nodes_[static_cast<std::size_t>(i)].back(*this, slot);
    }
  }

  /// Gradient of a node after backward. Exact zeros for attached nodes that
  /// the loss does not depend on.
  Grad grad(int node) const {
    if (!ran_backward_) throw Error("state", "grad queried before backward");
    if (node < 0 || node >= static_cast<int>(nodes_.size()))
      throw Error("value", "grad: unknown node id");
    const Grad& slot = grads_[static_cast<std::size_t>(node)];
    if (slot.size() == 0)
      return Grad::Zero(nodes_[static_cast<std::size_t>(node)].rows,
                        nodes_[static_cast<std::size_t>(node)].cols);
    return slot;
  }

  bool consumed() const { return ran_backward_; }
  std::size_t size() const { return nodes_.size(); }
  bool strict() const { return strict_; }

  void check_finite(const MatX<Scalar>& v, const char* op) const {
    if (strict_ && !v.allFinite())
      throw Error("numeric", std::string("non-finite input to ") + op);
  }

 private:
  struct Node {
    Index rows, cols;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<Grad> grads_;
  bool strict_ = false;
  bool ran_backward_ = false;
};

namespace detail {

template <class Scalar>
Tape<Scalar>* tape_of(std::initializer_list<const Tensor<Scalar>*> ts) {
  Tape<Scalar>* tape = nullptr;
  for (const auto* t : ts) {
    if (!t || !t->attached()) continue;
    if (!tape)
      tape = t->tape;
    else if (tape != t->tape)
      throw Error("value", "operands recorded on different tapes");
  }
  return tape;
}

enum class Bcast { same, row, scalar };

template <class Scalar>
Bcast broadcast_kind(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  throw Error("shape", std::string(op) + ": incompatible shapes (" + std::to_string(a.rows()) +
                           "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                           "x" + std::to_string(b.cols()) + ")");
}

/// Reduces a gradient of a's shape back to b's (broadcast rhs) shape.
template <class Scalar>
MatX<Scalar> reduce_to_rhs(const MatX<Scalar>& g, Bcast kind) {
  switch (kind) {
    case Bcast::same:
      return g;
    case Bcast::scalar: {
      MatX<Scalar> r(1, 1);
      r(0, 0) = g.sum();
      return r;
    }
    case Bcast::row:
      return g.colwise().sum();
  }
  throw Error("value", "unreachable broadcast kind");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive ops. Each op validates shapes, computes the value, and records a
// backward closure when any input is attached.
// ---------------------------------------------------------------------------

template <class Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows())
    throw Error("shape", "matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + ")");
  auto* tape = detail::tape_of<Scalar>({&a, &b});
  Tensor<Scalar> out(MatX<Scalar>(a.value * b.value));
  if (!tape) return out;
  tape->check_finite(a.value, "matmul");
  tape->check_finite(b.value, "matmul");
  const int pa = a.node, pb = b.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, pb, av = a.value, bv = b.value](Tape<Scalar>& t,
                                                                 const MatX<Scalar>& g) {
                              if (pa >= 0) t.accumulate(pa, g * bv.transpose());
                              if (pb >= 0) t.accumulate(pb, av.transpose() * g);
                            });
  return out;
}

template <class Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(a.value.transpose()));
  if (!tape) return out;
  const int pa = a.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0) t.accumulate(pa, g.transpose());
                            });
  return out;
}

/// Elementwise a + b; b may broadcast as a 1xN row over a's rows (the token
/// axis) or as a 1x1 scalar.
template <class Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const auto kind = detail::broadcast_kind(a, b, "add");
  auto* tape = detail::tape_of<Scalar>({&a, &b});
  MatX<Scalar> v;
  switch (kind) {
    case detail::Bcast::same:
      v = a.value + b.value;
      break;
    case detail::Bcast::scalar:
      v = (a.value.array() + b.value(0, 0)).matrix();
      break;
    case detail::Bcast::row:
      v = a.value;
      v.rowwise() += b.value.row(0);
      break;
  }
  Tensor<Scalar> out(std::move(v));
  if (!tape) return out;
  tape->check_finite(a.value, "add");
  tape->check_finite(b.value, "add");
  const int pa = a.node, pb = b.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, pb, kind](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0) t.accumulate(pa, g);
                              if (pb >= 0) t.accumulate(pb, detail::reduce_to_rhs(g, kind));
                            });
  return out;
}

template <class Scalar>
Tensor<Scalar> subtract(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const auto kind = detail::broadcast_kind(a, b, "subtract");
  auto* tape = detail::tape_of<Scalar>({&a, &b});
  MatX<Scalar> v;
  switch (kind) {
    case detail::Bcast::same:
      v = a.value - b.value;
      break;
    case detail::Bcast::scalar:
      v = (a.value.array() - b.value(0, 0)).matrix();
      break;
    case detail::Bcast::row:
      v = a.value;
      v.rowwise() -= b.value.row(0);
      break;
  }
  Tensor<Scalar> out(std::move(v));
  if (!tape) return out;
  tape->check_finite(a.value, "subtract");
  tape->check_finite(b.value, "subtract");
  const int pa = a.node, pb = b.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, pb, kind](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0) t.accumulate(pa, g);
                              if (pb >= 0)
                                t.accumulate(pb, MatX<Scalar>(-detail::reduce_to_rhs(g, kind)));
                            });
  return out;
}

/// Elementwise a * b with the same rhs broadcasting rules as add.
template <class Scalar>
Tensor<Scalar> multiply(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const auto kind = detail::broadcast_kind(a, b, "multiply");
  auto* tape = detail::tape_of<Scalar>({&a, &b});
  MatX<Scalar> v;
  switch (kind) {
    case detail::Bcast::same:
      v = a.value.cwiseProduct(b.value);
      break;
    case detail::Bcast::scalar:
      v = a.value * b.value(0, 0);
      break;
    case detail::Bcast::row:
      v = (a.value.array().rowwise() * b.value.row(0).array()).matrix();
      break;
  }
  Tensor<Scalar> out(std::move(v));
  if (!tape) return out;
  tape->check_finite(a.value, "multiply");
  tape->check_finite(b.value, "multiply");
  const int pa = a.node, pb = b.node;
  out.tape = tape;
  out.node = tape->add_node(
      out.rows(), out.cols(),
      [pa, pb, kind, av = a.value, bv = b.value](Tape<Scalar>& t, const MatX<Scalar>& g) {
        if (pa >= 0) {
          switch (kind) {
            case detail::Bcast::same:
              t.accumulate(pa, g.cwiseProduct(bv));
              break;
            case detail::Bcast::scalar:
              t.accumulate(pa, MatX<Scalar>(g * bv(0, 0)));
              break;
            case detail::Bcast::row:
              t.accumulate(pa,
                           MatX<Scalar>((g.array().rowwise() * bv.row(0).array()).matrix()));
              break;
          }
        }
        if (pb >= 0)
          t.accumulate(pb, detail::reduce_to_rhs<Scalar>(g.cwiseProduct(av), kind));
      });
  return out;
}

template <class Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(a.value * c));
  if (!tape) return out;
  tape->check_finite(a.value, "scale");
  const int pa = a.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, c](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0) t.accumulate(pa, MatX<Scalar>(g * c));
                            });
  return out;
}

template <class Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(a.value.array().exp().matrix()));
  if (!tape) return out;
  tape->check_finite(a.value, "exp");
  const int pa = a.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, ov = out.value](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0) t.accumulate(pa, g.cwiseProduct(ov));
                            });
  return out;
}

/// GELU with the tanh approximation.
template <class Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a) {
  static constexpr Scalar k = Scalar(0.7978845608028654);  // sqrt(2/pi)
  static constexpr Scalar c3 = Scalar(0.044715);
  auto* tape = detail::tape_of<Scalar>({&a});
  const auto x = a.value.array();
  MatX<Scalar> inner = (k * (x + c3 * x.cube())).matrix();
  MatX<Scalar> th = inner.array().tanh().matrix();
  Tensor<Scalar> out(MatX<Scalar>((Scalar(0.5) * x * (Scalar(1) + th.array())).matrix()));
  if (!tape) return out;
  tape->check_finite(a.value, "gelu");
  const int pa = a.node;
  out.tape = tape;
  out.node = tape->add_node(
      out.rows(), out.cols(),
      [pa, av = a.value, th](Tape<Scalar>& t, const MatX<Scalar>& g) {
        if (pa < 0) return;
        const auto x = av.array();
        const auto tv = th.array();
        const auto sech2 = Scalar(1) - tv.square();
        const auto dinner = k * (Scalar(1) + Scalar(3) * c3 * x.square());
        const auto d = Scalar(0.5) * (Scalar(1) + tv) + Scalar(0.5) * x * sech2 * dinner;
        t.accumulate(pa, MatX<Scalar>((g.array() * d).matrix()));
      });
  return out;
}

template <class Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(a.value.array().square().matrix()));
  if (!tape) return out;
  tape->check_finite(a.value, "square");
  const int pa = a.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, av = a.value](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0)
                                t.accumulate(pa, MatX<Scalar>(Scalar(2) * g.cwiseProduct(av)));
                            });
  return out;
}

template <class Scalar>
Tensor<Scalar> sqrt(const Tensor<Scalar>& a) {
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(a.value.array().sqrt().matrix()));
  if (!tape) return out;
  tape->check_finite(a.value, "sqrt");
  const int pa = a.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, ov = out.value](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0)
                                t.accumulate(pa, MatX<Scalar>((g.array() /
                                                               (Scalar(2) * ov.array()))
                                                                  .matrix()));
                            });
  return out;
}

/// Concatenation along axis 0 (token axis) or axis 1 (feature axis).
template <class Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, int axis = 0) {
  if (parts.empty()) throw Error("shape", "concat: no operands");
  if (axis != 0 && axis != 1) throw Error("value", "concat: axis must be 0 or 1");
  Index total = 0;
  const Index other = axis == 0 ? parts[0].cols() : parts[0].rows();
  for (const auto& p : parts) {
    const Index match = axis == 0 ? p.cols() : p.rows();
    if (match != other) throw Error("shape", "concat: operands disagree off the concat axis");
    total += axis == 0 ? p.rows() : p.cols();
  }
  std::vector<const Tensor<Scalar>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  Tape<Scalar>* tape = nullptr;
  for (const auto* p : ptrs) {
    auto* t = detail::tape_of<Scalar>({p});
    if (t && tape && t != tape) throw Error("value", "operands recorded on different tapes");
    if (t) tape = t;
  }
  MatX<Scalar> v = axis == 0 ? MatX<Scalar>(total, other) : MatX<Scalar>(other, total);
  Index off = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      v.middleRows(off, p.rows()) = p.value;
      off += p.rows();
    } else {
      v.middleCols(off, p.cols()) = p.value;
      off += p.cols();
    }
  }
  Tensor<Scalar> out(std::move(v));
  if (!tape) return out;
  struct Piece {
    int node;
    Index off, extent;
  };
  std::vector<Piece> pieces;
  off = 0;
  for (const auto& p : parts) {
    const Index extent = axis == 0 ? p.rows() : p.cols();
    if (p.attached()) pieces.push_back({p.node, off, extent});
    tape->check_finite(p.value, "concat");
    off += extent;
  }
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pieces, axis](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              for (const auto& pc : pieces) {
                                if (axis == 0)
                                  t.accumulate(pc.node, g.middleRows(pc.off, pc.extent));
                                else
                                  t.accumulate(pc.node, g.middleCols(pc.off, pc.extent));
                              }
                            });
  return out;
}

template <class Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& a, Index row0, Index nrows, Index col0, Index ncols) {
  if (row0 < 0 || col0 < 0 || nrows < 0 || ncols < 0 || row0 + nrows > a.rows() ||
      col0 + ncols > a.cols())
    throw Error("shape", "slice: range out of bounds");
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(a.value.block(row0, col0, nrows, ncols)));
  if (!tape) return out;
  const int pa = a.node;
  const Index ar = a.rows(), ac = a.cols();
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, row0, nrows, col0, ncols, ar, ac](Tape<Scalar>& t,
                                                                   const MatX<Scalar>& g) {
                              if (pa < 0) return;
                              MatX<Scalar> full = MatX<Scalar>::Zero(ar, ac);
                              full.block(row0, col0, nrows, ncols) = g;
                              t.accumulate(pa, full);
                            });
  return out;
}

/// Row-major reshape: the flat element order is preserved.
template <class Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Index rows, Index cols) {
  if (rows * cols != a.size())
    throw Error("shape", "reshape: element count changes (" + std::to_string(a.size()) +
                             " -> " + std::to_string(rows * cols) + ")");
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(Eigen::Map<const MatX<Scalar>>(a.value.data(), rows, cols)));
  if (!tape) return out;
  const int pa = a.node;
  const Index ar = a.rows(), ac = a.cols();
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, ar, ac](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0)
                                t.accumulate(pa, MatX<Scalar>(Eigen::Map<const MatX<Scalar>>(
                                                     g.data(), ar, ac)));
                            });
  return out;
}

/// Softmax over the last axis with an optional additive mask (same shape as
/// the logits or a broadcast 1xN row). Masked entries carry exactly zero
/// weight; the mask itself is treated as data and never differentiated.
/// Uses max-subtraction, so finite logits give finite outputs.
template <class Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits, const Tensor<Scalar>* mask = nullptr) {
  auto* tape = detail::tape_of<Scalar>({&logits});
  MatX<Scalar> masked = logits.value;
  if (mask) {
    if (mask->rows() == 1 && mask->cols() == masked.cols())
      masked.rowwise() += mask->value.row(0);
    else if (mask->rows() == masked.rows() && mask->cols() == masked.cols())
      masked += mask->value;
    else
      throw Error("shape", "softmax: mask must match the logits' trailing shape");
  }
  VecX<Scalar> rowmax = masked.rowwise().maxCoeff();
  MatX<Scalar> e = (masked.colwise() - rowmax).array().exp().matrix();
  VecX<Scalar> sums = e.rowwise().sum();
  if (!(sums.array() > Scalar(0)).all() || !sums.allFinite())
    throw Error("numeric", "softmax: a row has no unmasked finite entry");
  MatX<Scalar> s = (e.array().colwise() / sums.array()).matrix();
  Tensor<Scalar> out(std::move(s));
  if (!tape) return out;
  tape->check_finite(logits.value, "softmax");
  const int pa = logits.node;
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, sv = out.value](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa < 0) return;
                              VecX<Scalar> dot = g.cwiseProduct(sv).rowwise().sum();
                              MatX<Scalar> d =
                                  (sv.array() * (g.colwise() - dot).array()).matrix();
                              t.accumulate(pa, d);
                            });
  return out;
}

template <class Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits, const Tensor<Scalar>& mask) {
  return softmax(logits, &mask);
}

/// Layer normalization over the last axis with learnable 1xD gain and bias.
template <class Scalar>
Tensor<Scalar> layernorm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                         const Tensor<Scalar>& beta, Scalar eps = Scalar(1e-5)) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
      beta.cols() != x.cols())
    throw Error("shape", "layernorm: gain/bias must be 1 x cols(x)");
  auto* tape = detail::tape_of<Scalar>({&x, &gamma, &beta});
  VecX<Scalar> mu = x.value.rowwise().mean();
  MatX<Scalar> centered = x.value.colwise() - mu;
  VecX<Scalar> var = centered.array().square().rowwise().mean().matrix();
  VecX<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  MatX<Scalar> xhat = (centered.array().colwise() * inv_std.array()).matrix();
  MatX<Scalar> v = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
  v.rowwise() += beta.value.row(0);
  Tensor<Scalar> out(std::move(v));
  if (!tape) return out;
  tape->check_finite(x.value, "layernorm");
  const int px = x.node, pg = gamma.node, pb = beta.node;
  out.tape = tape;
  out.node = tape->add_node(
      out.rows(), out.cols(),
      [px, pg, pb, xhat, inv_std, gv = gamma.value](Tape<Scalar>& t, const MatX<Scalar>& g) {
        if (pg >= 0) t.accumulate(pg, MatX<Scalar>(g.cwiseProduct(xhat).colwise().sum()));
        if (pb >= 0) t.accumulate(pb, MatX<Scalar>(g.colwise().sum()));
        if (px < 0) return;
        MatX<Scalar> dxhat = (g.array().rowwise() * gv.row(0).array()).matrix();
        VecX<Scalar> m1 = dxhat.rowwise().mean();
        VecX<Scalar> m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
        MatX<Scalar> dx =
            (((dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix())
                 .array()
                 .colwise() *
             inv_std.array())
                .matrix();
        t.accumulate(px, dx);
      });
  return out;
}

/// Mean over the token axis (rows): n x d -> 1 x d.
template <class Scalar>
Tensor<Scalar> mean_tokens(const Tensor<Scalar>& a) {
  if (a.rows() < 1) throw Error("shape", "mean_tokens: empty tensor");
  auto* tape = detail::tape_of<Scalar>({&a});
  Tensor<Scalar> out(MatX<Scalar>(a.value.colwise().mean()));
  if (!tape) return out;
  tape->check_finite(a.value, "mean_tokens");
  const int pa = a.node;
  const Index n = a.rows();
  out.tape = tape;
  out.node = tape->add_node(out.rows(), out.cols(),
                            [pa, n](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0)
                                t.accumulate(pa, MatX<Scalar>((MatX<Scalar>::Ones(n, 1) * g) /
                                                              Scalar(n)));
                            });
  return out;
}

/// Full reduction to a 1x1 scalar.
template <class Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  auto* tape = detail::tape_of<Scalar>({&a});
  MatX<Scalar> v(1, 1);
  v(0, 0) = a.value.sum();
  Tensor<Scalar> out(std::move(v));
  if (!tape) return out;
  tape->check_finite(a.value, "sum");
  const int pa = a.node;
  const Index r = a.rows(), c = a.cols();
  out.tape = tape;
  out.node = tape->add_node(1, 1,
                            [pa, r, c](Tape<Scalar>& t, const MatX<Scalar>& g) {
                              if (pa >= 0)
                                t.accumulate(pa, MatX<Scalar>(MatX<Scalar>::Constant(r, c,
                                                                                     g(0, 0))));
                            });
  return out;
}

/// Mean of all entries, as a 1x1 scalar.
template <class Scalar>
Tensor<Scalar> mean_all(const Tensor<Scalar>& a) {
  return scale(sum(a), Scalar(1) / Scalar(a.size()));
}

}  // namespace omnifield::ag
