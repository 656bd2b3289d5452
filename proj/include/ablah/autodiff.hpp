#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A BasicTape records every operation in execution order. Values are column-
// major Eigen matrices; vectors are n x 1 and scalars are 1 x 1. Parameters
// are recorded by reference so binding a large model to a tape is cheap.
// backward() walks the record strictly in reverse and accumulates gradients
// into every node that the loss depends on.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ablah::ad {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Derived>
std::string shape_of(const Eigen::EigenBase<Derived>& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

template <typename Scalar>
class BasicTape;

template <typename Scalar>
class BasicVar {
 public:
  using Matrix = Mat<Scalar>;

  BasicVar() = default;
  BasicVar(BasicTape<Scalar>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] BasicTape<Scalar>& tape() const { return *tape_; }
  [[nodiscard]] std::uint32_t id() const { return id_; }
  [[nodiscard]] const Matrix& value() const { return tape_->value(*this); }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] Scalar scalar() const { return value()(0, 0); }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

template <typename Scalar>
class BasicTape {
 public:
  using Matrix = Mat<Scalar>;
  using Var = BasicVar<Scalar>;
  // Receives the gradient flowing into a node and pushes it to its inputs.
  using Backward = std::function<void(BasicTape&, const Matrix&)>;

  // When record_gradients is false no backward closures are stored; the tape
  // then acts as a plain evaluator.
  explicit BasicTape(bool record_gradients = true) : recording_(record_gradients) {
    nodes_.reserve(1024);
  }

  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  [[nodiscard]] bool recording() const { return recording_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix value) { return push(std::move(value), nullptr, false, {}); }

  Var variable(Matrix value) { return push(std::move(value), nullptr, recording_, {}); }

  // `value` must outlive the tape.
  Var parameter(const Matrix& value) { return push(Matrix{}, &value, recording_, {}); }

  Var record(Matrix value, bool requires_grad, Backward backward) {
    const bool track = recording_ && requires_grad;
    return push(std::move(value), nullptr, track, track ? std::move(backward) : Backward{});
  }

  [[nodiscard]] const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.external ? *n.external : n.owned;
  }

  [[nodiscard]] bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Gradient of the last backward() target; zeros when the node was not reached.
  [[nodiscard]] Matrix grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) {
      const Matrix& val = value(v);
      return Matrix::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  [[nodiscard]] const Matrix* grad_if_reached(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.grad.size() == 0 ? nullptr : &n.grad;
  }

  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  template <typename Derived>
  void accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      const Matrix& val = value(v);
      n.grad = Matrix::Zero(val.rows(), val.cols());
    }
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad.resize(0, 0);
  }

  void backward(Var loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw std::invalid_argument("backward: loss must be a 1x1 scalar, got " + shape_of(loss.value()));
    }
    if (!recording_) throw std::logic_error("backward: tape was created without gradient recording");
    zero_grad();
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, const Matrix* external, bool requires_grad, Backward backward) {
    Node n;
    n.owned = std::move(value);
    n.external = external;
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  bool recording_;
};

namespace detail {

template <typename Scalar>
bool any_grad(std::initializer_list<BasicVar<Scalar>> vars) {
  for (const auto& v : vars) {
    if (v.tape().requires_grad(v)) return true;
  }
  return false;
}

template <typename Scalar>
void require_same_shape(const char* op, const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " + shape_of(b.value()));
  }
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

// a * b
template <typename Scalar>
BasicVar<Scalar> matmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_of(a.value()) + " * " + shape_of(b.value()));
  }
  auto& tape = a.tape();
  Mat<Scalar> out = a.value() * b.value();
  return tape.record(std::move(out), detail::any_grad({a, b}), [a, b](auto& t, const auto& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

// aᵀ * b
template <typename Scalar>
BasicVar<Scalar> matmul_tn(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: shape mismatch " + shape_of(a.value()) + "^T * " + shape_of(b.value()));
  }
  auto& tape = a.tape();
  Mat<Scalar> out = a.value().transpose() * b.value();
  return tape.record(std::move(out), detail::any_grad({a, b}), [a, b](auto& t, const auto& g) {
    if (t.requires_grad(a)) t.accumulate(a, b.value() * g.transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value() * g);
  });
}

// Σ weightᵢᵀ * inputᵢ + bias; the weights are stored input-major (d_in x d_out).
template <typename Scalar>
BasicVar<Scalar> affine_tn(std::initializer_list<std::pair<BasicVar<Scalar>, BasicVar<Scalar>>> terms,
                           BasicVar<Scalar> bias) {
  std::vector<std::pair<BasicVar<Scalar>, BasicVar<Scalar>>> ts(terms);
  Mat<Scalar> out = bias.value();
  bool needs = bias.tape().requires_grad(bias);
  for (const auto& [w, x] : ts) {
    if (w.rows() != x.rows() || w.cols() != out.rows() || x.cols() != out.cols()) {
      throw DimensionError("affine_tn: shape mismatch " + shape_of(w.value()) + "^T * " + shape_of(x.value()) +
                           " + " + shape_of(out));
    }
    out.noalias() += w.value().transpose() * x.value();
    needs = needs || w.tape().requires_grad(w) || x.tape().requires_grad(x);
  }
  return bias.tape().record(std::move(out), needs, [ts, bias](auto& t, const auto& g) {
    t.accumulate(bias, g);
    for (const auto& [w, x] : ts) {
      if (t.requires_grad(w)) t.accumulate(w, x.value() * g.transpose());
      if (t.requires_grad(x)) t.accumulate(x, w.value() * g);
    }
  });
}

template <typename Scalar>
BasicVar<Scalar> transpose(BasicVar<Scalar> a) {
  Mat<Scalar> out = a.value().transpose();
  return a.tape().record(std::move(out), detail::any_grad({a}),
                         [a](auto& t, const auto& g) { t.accumulate(a, g.transpose()); });
}

template <typename Scalar>
BasicVar<Scalar> operator+(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::require_same_shape("add", a, b);
  Mat<Scalar> out = a.value() + b.value();
  return a.tape().record(std::move(out), detail::any_grad({a, b}), [a, b](auto& t, const auto& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename Scalar>
BasicVar<Scalar> operator-(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::require_same_shape("sub", a, b);
  Mat<Scalar> out = a.value() - b.value();
  return a.tape().record(std::move(out), detail::any_grad({a, b}), [a, b](auto& t, const auto& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

template <typename Scalar>
BasicVar<Scalar> hadamard(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::require_same_shape("hadamard", a, b);
  Mat<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), detail::any_grad({a, b}), [a, b](auto& t, const auto& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

template <typename Scalar>
BasicVar<Scalar> scale(BasicVar<Scalar> a, Scalar s) {
  Mat<Scalar> out = a.value() * s;
  return a.tape().record(std::move(out), detail::any_grad({a}),
                         [a, s](auto& t, const auto& g) { t.accumulate(a, g * s); });
}

template <typename Scalar>
BasicVar<Scalar> sigmoid(BasicVar<Scalar> a) {
  Mat<Scalar> out = a.value().unaryExpr([](Scalar x) { return detail::stable_sigmoid(x); });
  auto& tape = a.tape();
  Mat<Scalar> deriv = tape.recording() ? Mat<Scalar>((out.array() * (1 - out.array())).matrix()) : Mat<Scalar>{};
  return tape.record(std::move(out), detail::any_grad({a}),
                     [a, deriv = std::move(deriv)](auto& t, const auto& g) { t.accumulate(a, g.cwiseProduct(deriv)); });
}

template <typename Scalar>
BasicVar<Scalar> tanh(BasicVar<Scalar> a) {
  Mat<Scalar> out = a.value().array().tanh().matrix();
  auto& tape = a.tape();
  Mat<Scalar> deriv = tape.recording() ? Mat<Scalar>((1 - out.array().square()).matrix()) : Mat<Scalar>{};
  return tape.record(std::move(out), detail::any_grad({a}),
                     [a, deriv = std::move(deriv)](auto& t, const auto& g) { t.accumulate(a, g.cwiseProduct(deriv)); });
}

template <typename Scalar>
BasicVar<Scalar> relu(BasicVar<Scalar> a) {
  Mat<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape().record(std::move(out), detail::any_grad({a}), [a](auto& t, const auto& g) {
    t.accumulate(a, (a.value().array() > Scalar(0)).select(g.array(), Scalar(0)).matrix());
  });
}

// Softmax over every entry of a row or column vector, with max subtraction.
template <typename Scalar>
BasicVar<Scalar> softmax(BasicVar<Scalar> a) {
  const auto& x = a.value();
  if (x.rows() != 1 && x.cols() != 1) throw DimensionError("softmax: expected a vector, got " + shape_of(x));
  Mat<Scalar> out = (x.array() - x.maxCoeff()).exp().matrix();
  out /= out.sum();
  Mat<Scalar> y = a.tape().recording() ? out : Mat<Scalar>{};
  return a.tape().record(std::move(out), detail::any_grad({a}), [a, y = std::move(y)](auto& t, const auto& g) {
    const Scalar dot = g.cwiseProduct(y).sum();
    t.accumulate(a, (y.array() * (g.array() - dot)).matrix());
  });
}

template <typename Scalar>
BasicVar<Scalar> sum(BasicVar<Scalar> a) {
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape().record(std::move(out), detail::any_grad({a}), [a, rows, cols](auto& t, const auto& g) {
    t.accumulate(a, Mat<Scalar>::Constant(rows, cols, g(0, 0)));
  });
}

// Arithmetic mean of same-shaped values.
template <typename Scalar>
BasicVar<Scalar> mean(std::span<const BasicVar<Scalar>> values) {
  if (values.empty()) throw std::invalid_argument("mean: empty input");
  Mat<Scalar> out = values[0].value();
  bool needs = values[0].tape().requires_grad(values[0]);
  for (std::size_t k = 1; k < values.size(); ++k) {
    detail::require_same_shape("mean", values[0], values[k]);
    out += values[k].value();
    needs = needs || values[k].tape().requires_grad(values[k]);
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(values.size());
  out *= inv;
  std::vector<BasicVar<Scalar>> vs(values.begin(), values.end());
  return values[0].tape().record(std::move(out), needs, [vs, inv](auto& t, const auto& g) {
    for (const auto& v : vs) t.accumulate(v, g * inv);
  });
}

// axis 0 stacks rows (all inputs share the column count); axis 1 stacks columns.
template <typename Scalar>
BasicVar<Scalar> concat(std::span<const BasicVar<Scalar>> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input");
  Eigen::Index rows = 0, cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (axis == 0) {
      if (p.cols() != parts[0].cols()) {
        throw DimensionError("concat(axis 0): shape mismatch " + shape_of(parts[0].value()) + " vs " +
                             shape_of(p.value()));
      }
      rows += p.rows();
      cols = p.cols();
    } else {
      if (p.rows() != parts[0].rows()) {
        throw DimensionError("concat(axis 1): shape mismatch " + shape_of(parts[0].value()) + " vs " +
                             shape_of(p.value()));
      }
      cols += p.cols();
      rows = p.rows();
    }
    needs = needs || p.tape().requires_grad(p);
  }
  Mat<Scalar> out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      out.middleRows(offset, p.rows()) = p.value();
      offset += p.rows();
    } else {
      out.middleCols(offset, p.cols()) = p.value();
      offset += p.cols();
    }
  }
  std::vector<BasicVar<Scalar>> ps(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), needs, [ps, axis](auto& t, const auto& g) {
    Eigen::Index off = 0;
    for (const auto& p : ps) {
      if (axis == 0) {
        if (t.requires_grad(p)) t.accumulate(p, g.middleRows(off, p.rows()));
        off += p.rows();
      } else {
        if (t.requires_grad(p)) t.accumulate(p, g.middleCols(off, p.cols()));
        off += p.cols();
      }
    }
  });
}

template <typename Scalar>
BasicVar<Scalar> concat(std::initializer_list<BasicVar<Scalar>> parts, int axis) {
  std::vector<BasicVar<Scalar>> ps(parts);
  return concat(std::span<const BasicVar<Scalar>>(ps), axis);
}

template <typename Scalar>
BasicVar<Scalar> column(BasicVar<Scalar> a, Eigen::Index j) {
  Mat<Scalar> out = a.value().col(j);
  return a.tape().record(std::move(out), detail::any_grad({a}),
                         [a, j](auto& t, const auto& g) { t.accumulate_block(a, 0, j, g); });
}

// Row `i` of a lookup table, returned as a column vector.
template <typename Scalar>
BasicVar<Scalar> embedding_lookup(BasicVar<Scalar> table, Eigen::Index i) {
  if (i < 0 || i >= table.rows()) {
    throw DimensionError("embedding_lookup: row " + std::to_string(i) + " outside " + shape_of(table.value()));
  }
  Mat<Scalar> out = table.value().row(i).transpose();
  return table.tape().record(std::move(out), detail::any_grad({table}), [table, i](auto& t, const auto& g) {
    t.accumulate_block(table, i, 0, g.transpose());
  });
}

// Binary cross-entropy of a 1x1 logit against a {0,1} label, computed as
// max(s,0) - y*s + log1p(exp(-|s|)) so large |s| never overflows.
template <typename Scalar>
BasicVar<Scalar> bce_with_logits(BasicVar<Scalar> logit, int label) {
  if (logit.rows() != 1 || logit.cols() != 1) {
    throw DimensionError("bce_with_logits: logit must be 1x1, got " + shape_of(logit.value()));
  }
  const Scalar s = logit.scalar();
  const Scalar y = static_cast<Scalar>(label);
  Mat<Scalar> out(1, 1);
  out(0, 0) = std::max(s, Scalar(0)) - y * s + std::log1p(std::exp(-std::abs(s)));
  const Scalar d = detail::stable_sigmoid(s) - y;
  return logit.tape().record(std::move(out), detail::any_grad({logit}),
                             [logit, d](auto& t, const auto& g) { t.accumulate(logit, g * d); });
}

}  // namespace ablah::ad
