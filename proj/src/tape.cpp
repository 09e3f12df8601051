#include "rstack/tape.hpp"

#include <cmath>

#include "rstack/errors.hpp"

namespace rstack {

namespace {

using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatRM>;
using ConstMatMap = Eigen::Map<const MatRM>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

void require_same_tape(Var a, Var b, const char* prim) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(prim) + ": operands live on different tapes");
  }
}

void require_valid(Var v, const char* prim) {
  if (v.tape == nullptr || v.id < 0) {
    throw ContractError(std::string(prim) + ": unbound var");
  }
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kMatMul: return "matmul";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kEmbeddingRow: return "embedding_row";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kAbs: return "abs";
  }
  return "?";
}

Tape::Node& Tape::push(Op op) {
  if (active_ == static_cast<int>(nodes_.size())) nodes_.emplace_back();
  Node& nd = nodes_[static_cast<size_t>(active_)];
  ++active_;
  nd.op = op;
  nd.inputs.clear();
  nd.sink = nullptr;
  nd.aux0 = 0;
  nd.aux1 = 0;
  return nd;
}

const Tape::Node& Tape::node(Var v) const {
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::leaf(Tensor& t) {
  auto r = redirects_.find(&t);
  if (r != redirects_.end()) return leaf(t, r->second);
  t.ensure_grad();
  return leaf(t, &t.grad);
}

void Tape::redirect_leaf(const Tensor& t, Array* sink) { redirects_.emplace(&t, sink); }

Var Tape::leaf(const Tensor& t, Array* grad_sink) {
  auto it = leaf_ids_.find(&t);
  if (it != leaf_ids_.end()) return Var{this, it->second};
  Node& nd = push(Op::kLeaf);
  nd.shape = t.shape;
  nd.value = t.data;
  nd.sink = grad_sink;
  int id = active_ - 1;
  leaf_ids_.emplace(&t, id);
  return Var{this, id};
}

Var Tape::constant(const Tensor& t) { return constant(t.data, t.shape); }

Var Tape::constant(const Array& values, std::vector<int> shape) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("constant: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  Node& nd = push(Op::kConstant);
  nd.shape = std::move(shape);
  nd.value = values;
  return Var{this, active_ - 1};
}

Var Tape::constant_scalar(Scalar v) {
  Array a(1);
  a[0] = v;
  return constant(a, {1});
}

const Array& Tape::value(Var v) const {
  require_valid(v, "value");
  return node(v).value;
}

const std::vector<int>& Tape::shape(Var v) const {
  require_valid(v, "shape");
  return node(v).shape;
}

Scalar Tape::scalar_value(Var v) const {
  const Array& a = value(v);
  if (a.size() != 1) {
    throw ContractError("scalar_value: node holds " + std::to_string(a.size()) + " values");
  }
  return a[0];
}

void Tape::reset() {
  active_ = 0;
  leaf_ids_.clear();
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const Tape::Node& na = t.node(a);
  const Tape::Node& nb = t.node(b);
  if (na.shape != nb.shape) {
    throw DimensionError("add: shape mismatch " + shape_str(na.shape) + " vs " +
                         shape_str(nb.shape));
  }
  Tape::Node& nd = t.push(Op::kAdd);
  nd.inputs = {a.id, b.id};
  nd.shape = t.node(a).shape;
  nd.value = t.node(a).value + t.node(b).value;
  return Var{&t, t.active_ - 1};
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  if (t.node(a).shape != t.node(b).shape) {
    throw DimensionError("sub: shape mismatch " + shape_str(t.node(a).shape) + " vs " +
                         shape_str(t.node(b).shape));
  }
  Tape::Node& nd = t.push(Op::kSub);
  nd.inputs = {a.id, b.id};
  nd.shape = t.node(a).shape;
  nd.value = t.node(a).value - t.node(b).value;
  return Var{&t, t.active_ - 1};
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  Tape& t = *a.tape;
  if (t.node(a).shape != t.node(b).shape) {
    throw DimensionError("mul: shape mismatch " + shape_str(t.node(a).shape) + " vs " +
                         shape_str(t.node(b).shape));
  }
  Tape::Node& nd = t.push(Op::kMul);
  nd.inputs = {a.id, b.id};
  nd.shape = t.node(a).shape;
  nd.value = t.node(a).value * t.node(b).value;
  return Var{&t, t.active_ - 1};
}

Var div(Var a, Var b) {
  require_same_tape(a, b, "div");
  Tape& t = *a.tape;
  if (t.node(a).shape != t.node(b).shape) {
    throw DimensionError("div: shape mismatch " + shape_str(t.node(a).shape) + " vs " +
                         shape_str(t.node(b).shape));
  }
  Tape::Node& nd = t.push(Op::kDiv);
  nd.inputs = {a.id, b.id};
  nd.shape = t.node(a).shape;
  // no denominator guard: a zero here is a generator bug and should be loud
  nd.value = t.node(a).value / t.node(b).value;
  return Var{&t, t.active_ - 1};
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const std::vector<int>& sa = t.node(a).shape;
  const std::vector<int>& sb = t.node(b).shape;
  if (sa.size() != 2 || (sb.size() != 1 && sb.size() != 2)) {
    throw DimensionError("matmul: unsupported ranks " + shape_str(sa) + " x " + shape_str(sb));
  }
  const int m = sa[0];
  const int k = sa[1];
  if (sb[0] != k) {
    throw DimensionError("matmul: inner dims differ " + shape_str(sa) + " x " + shape_str(sb));
  }
  Tape::Node& nd = t.push(Op::kMatMul);
  nd.inputs = {a.id, b.id};
  const Array& va = t.node(a).value;
  const Array& vb = t.node(b).value;
  if (sb.size() == 1) {
    nd.shape = {m};
    nd.value.resize(m);
    VecMap(nd.value.data(), m).noalias() =
        ConstMatMap(va.data(), m, k) * ConstVecMap(vb.data(), k);
  } else {
    const int n = sb[1];
    nd.shape = {m, n};
    nd.value.resize(static_cast<Eigen::Index>(m) * n);
    MatMap(nd.value.data(), m, n).noalias() =
        ConstMatMap(va.data(), m, k) * ConstMatMap(vb.data(), k, n);
  }
  return Var{&t, t.active_ - 1};
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Tape& t = *parts[0].tape;
  Eigen::Index total = 0;
  for (Var p : parts) {
    require_same_tape(parts[0], p, "concat");
    if (t.node(p).shape.size() != 1) {
      throw DimensionError("concat: rank-1 inputs only, got " + shape_str(t.node(p).shape));
    }
    total += t.node(p).value.size();
  }
  Tape::Node& nd = t.push(Op::kConcat);
  nd.inputs.reserve(parts.size());
  for (Var p : parts) nd.inputs.push_back(p.id);
  nd.shape = {static_cast<int>(total)};
  nd.value.resize(total);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Array& v = t.node(p).value;
    nd.value.segment(at, v.size()) = v;
    at += v.size();
  }
  return Var{&t, t.active_ - 1};
}

Var slice(Var v, int offset, int len) {
  require_valid(v, "slice");
  Tape& t = *v.tape;
  const Tape::Node& src = t.node(v);
  if (src.shape.size() != 1) {
    throw DimensionError("slice: rank-1 input only, got " + shape_str(src.shape));
  }
  if (offset < 0 || len < 0 || offset + len > src.shape[0]) {
    throw IndexError("slice: [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                     ") out of " + shape_str(src.shape));
  }
  Tape::Node& nd = t.push(Op::kSlice);
  nd.inputs = {v.id};
  nd.shape = {len};
  nd.aux0 = offset;
  nd.aux1 = len;
  nd.value = t.node(v).value.segment(offset, len);
  return Var{&t, t.active_ - 1};
}

Var sigmoid(Var v) {
  require_valid(v, "sigmoid");
  Tape& t = *v.tape;
  Tape::Node& nd = t.push(Op::kSigmoid);
  nd.inputs = {v.id};
  nd.shape = t.node(v).shape;
  nd.value = 1.0 / (1.0 + (-t.node(v).value).exp());
  return Var{&t, t.active_ - 1};
}

Var tanh(Var v) {
  require_valid(v, "tanh");
  Tape& t = *v.tape;
  Tape::Node& nd = t.push(Op::kTanh);
  nd.inputs = {v.id};
  nd.shape = t.node(v).shape;
  nd.value = t.node(v).value.tanh();
  return Var{&t, t.active_ - 1};
}

Var embedding_row(Var table, int row) {
  require_valid(table, "embedding_row");
  Tape& t = *table.tape;
  const Tape::Node& src = t.node(table);
  if (src.shape.size() != 2) {
    throw DimensionError("embedding_row: rank-2 table required, got " + shape_str(src.shape));
  }
  const int vocab = src.shape[0];
  const int dim = src.shape[1];
  if (row < 0 || row >= vocab) {
    throw IndexError("embedding_row: row " + std::to_string(row) + " out of " +
                     shape_str(src.shape));
  }
  Tape::Node& nd = t.push(Op::kEmbeddingRow);
  nd.inputs = {table.id};
  nd.shape = {dim};
  nd.aux0 = row;
  nd.value = t.node(table).value.segment(static_cast<Eigen::Index>(row) * dim, dim);
  return Var{&t, t.active_ - 1};
}

Var sum(Var v) {
  require_valid(v, "sum");
  Tape& t = *v.tape;
  Tape::Node& nd = t.push(Op::kSum);
  nd.inputs = {v.id};
  nd.shape = {1};
  nd.value.resize(1);
  nd.value[0] = t.node(v).value.sum();
  return Var{&t, t.active_ - 1};
}

Var mean(Var v) {
  require_valid(v, "mean");
  Tape& t = *v.tape;
  if (t.node(v).value.size() == 0) throw ContractError("mean: empty input");
  Tape::Node& nd = t.push(Op::kMean);
  nd.inputs = {v.id};
  nd.shape = {1};
  nd.value.resize(1);
  nd.value[0] = t.node(v).value.mean();
  return Var{&t, t.active_ - 1};
}

Var abs(Var v) {
  require_valid(v, "abs");
  Tape& t = *v.tape;
  Tape::Node& nd = t.push(Op::kAbs);
  nd.inputs = {v.id};
  nd.shape = t.node(v).shape;
  nd.value = t.node(v).value.abs();
  return Var{&t, t.active_ - 1};
}

void Tape::backward_node(int id) {
  Node& nd = nodes_[static_cast<size_t>(id)];
  const Array& g = nd.grad;
  switch (nd.op) {
    case Op::kConstant:
      break;
    case Op::kLeaf:
      if (nd.sink != nullptr) {
        if (nd.sink->size() != nd.value.size()) {
          if (nd.sink->size() == 0) {
            *nd.sink = Array::Zero(nd.value.size());
          } else {
            throw ContractError("backward: leaf sink size mismatch");
          }
        }
        *nd.sink += g;
      }
      break;
    case Op::kAdd: {
      nodes_[static_cast<size_t>(nd.inputs[0])].grad += g;
      nodes_[static_cast<size_t>(nd.inputs[1])].grad += g;
      break;
    }
    case Op::kSub: {
      nodes_[static_cast<size_t>(nd.inputs[0])].grad += g;
      nodes_[static_cast<size_t>(nd.inputs[1])].grad -= g;
      break;
    }
    case Op::kMul: {
      Node& a = nodes_[static_cast<size_t>(nd.inputs[0])];
      Node& b = nodes_[static_cast<size_t>(nd.inputs[1])];
      a.grad += g * b.value;
      b.grad += g * a.value;
      break;
    }
    case Op::kDiv: {
      Node& a = nodes_[static_cast<size_t>(nd.inputs[0])];
      Node& b = nodes_[static_cast<size_t>(nd.inputs[1])];
      a.grad += g / b.value;
      b.grad -= g * a.value / (b.value * b.value);
      break;
    }
    case Op::kMatMul: {
      Node& a = nodes_[static_cast<size_t>(nd.inputs[0])];
      Node& b = nodes_[static_cast<size_t>(nd.inputs[1])];
      const int m = a.shape[0];
      const int k = a.shape[1];
      if (b.shape.size() == 1) {
        // y = A x: dA += g x^T, dx += A^T g
        MatMap(a.grad.data(), m, k).noalias() +=
            ConstVecMap(g.data(), m) * ConstVecMap(b.value.data(), k).transpose();
        VecMap(b.grad.data(), k).noalias() +=
            ConstMatMap(a.value.data(), m, k).transpose() * ConstVecMap(g.data(), m);
      } else {
        const int n = b.shape[1];
        MatMap(a.grad.data(), m, k).noalias() +=
            ConstMatMap(g.data(), m, n) * ConstMatMap(b.value.data(), k, n).transpose();
        MatMap(b.grad.data(), k, n).noalias() +=
            ConstMatMap(a.value.data(), m, k).transpose() * ConstMatMap(g.data(), m, n);
      }
      break;
    }
    case Op::kConcat: {
      Eigen::Index at = 0;
      for (int in : nd.inputs) {
        Node& p = nodes_[static_cast<size_t>(in)];
        p.grad += g.segment(at, p.value.size());
        at += p.value.size();
      }
      break;
    }
    case Op::kSlice: {
      Node& p = nodes_[static_cast<size_t>(nd.inputs[0])];
      p.grad.segment(nd.aux0, nd.aux1) += g;
      break;
    }
    case Op::kSigmoid: {
      Node& p = nodes_[static_cast<size_t>(nd.inputs[0])];
      p.grad += g * nd.value * (1.0 - nd.value);
      break;
    }
    case Op::kTanh: {
      Node& p = nodes_[static_cast<size_t>(nd.inputs[0])];
      p.grad += g * (1.0 - nd.value * nd.value);
      break;
    }
    case Op::kEmbeddingRow: {
      Node& p = nodes_[static_cast<size_t>(nd.inputs[0])];
      const int dim = nd.shape[0];
      p.grad.segment(static_cast<Eigen::Index>(nd.aux0) * dim, dim) += g;
      break;
    }
    case Op::kSum: {
      nodes_[static_cast<size_t>(nd.inputs[0])].grad += g[0];
      break;
    }
    case Op::kMean: {
      Node& p = nodes_[static_cast<size_t>(nd.inputs[0])];
      p.grad += g[0] / static_cast<Scalar>(p.value.size());
      break;
    }
    case Op::kAbs: {
      Node& p = nodes_[static_cast<size_t>(nd.inputs[0])];
      // subgradient at 0 is 0
      p.grad += g * p.value.sign();
      break;
    }
  }
}

void Tape::backward(Var loss) {
  require_valid(loss, "backward");
  if (loss.tape != this) throw ContractError("backward: loss from another tape");
  if (node(loss).value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(node(loss).shape));
  }
  for (int i = 0; i <= loss.id; ++i) {
    Node& nd = nodes_[static_cast<size_t>(i)];
    nd.grad.resize(nd.value.size());
    nd.grad.setZero();
  }
  nodes_[static_cast<size_t>(loss.id)].grad[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) backward_node(i);
}

Scalar grad_check(const std::function<Var(Tape&)>& f, Tensor& point, Scalar step) {
  point.zero_grad();
  Array analytic;
  {
    Tape tape;
    Var loss = f(tape);
    if (tape.value(loss).size() != 1) {
      throw ContractError("grad_check: function output must be scalar");
    }
    tape.backward(loss);
    analytic = point.grad;
  }

  Scalar max_rel = 0.0;
  Tape probe;
  for (Eigen::Index i = 0; i < point.data.size(); ++i) {
    const Scalar keep = point.data[i];
    point.data[i] = keep + step;
    probe.reset();
    const Scalar fp = probe.scalar_value(f(probe));
    point.data[i] = keep - step;
    probe.reset();
    const Scalar fm = probe.scalar_value(f(probe));
    point.data[i] = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    const Scalar fd = (fp - fm) / (2.0 * step);
    const Scalar rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace rstack
