#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "rstack/tensor.hpp"

namespace rstack {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid until the tape is reset.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

enum class Op : uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatMul,
  kConcat,
  kSlice,
  kSigmoid,
  kTanh,
  kEmbeddingRow,
  kSum,
  kMean,
  kAbs,
};

const char* op_name(Op op);

// Define-by-run reverse-mode tape. Values are computed eagerly as nodes are
// recorded, so a forward pass is just building the graph; backward() replays
// it once in reverse. Node storage is pooled: reset() keeps buffers so the
// next pass of the same shape allocates nothing.
//
// A tape and its Vars are confined to one thread for the duration of a
// forward+backward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers t as a differentiable leaf. Gradients accumulate into t.grad.
  // Repeated registration of the same tensor returns the same node.
  Var leaf(Tensor& t);

  // Leaf with an explicit gradient sink (used for per-thread accumulation).
  Var leaf(const Tensor& t, Array* grad_sink);

  // Input that needs no gradient.
  Var constant(const Tensor& t);
  Var constant(const Array& values, std::vector<int> shape);
  Var constant_scalar(Scalar v);

  // Routes future leaf(t) registrations into sink instead of t.grad, so
  // worker threads can accumulate privately and be merged by summation.
  // Redirections survive reset().
  void redirect_leaf(const Tensor& t, Array* sink);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse topological
  // order. Leaf gradients are added to their sinks; calling backward twice
  // without zeroing the sinks doubles them.
  void backward(Var loss);

  const Array& value(Var v) const;
  const std::vector<int>& shape(Var v) const;
  Scalar scalar_value(Var v) const;

  // Drops all nodes but keeps their storage for reuse.
  void reset();
  int size() const { return active_; }

 private:
  friend Var add(Var a, Var b);
  friend Var sub(Var a, Var b);
  friend Var mul(Var a, Var b);
  friend Var div(Var a, Var b);
  friend Var matmul(Var a, Var b);
  friend Var concat(std::span<const Var> parts);
  friend Var slice(Var v, int offset, int len);
  friend Var sigmoid(Var v);
  friend Var tanh(Var v);
  friend Var embedding_row(Var table, int row);
  friend Var sum(Var v);
  friend Var mean(Var v);
  friend Var abs(Var v);

  struct Node {
    Op op = Op::kConstant;
    std::vector<int> inputs;
    std::vector<int> shape;
    Array value;
    Array grad;
    Array* sink = nullptr;  // leaf only
    int aux0 = 0;           // slice offset / embedding row
    int aux1 = 0;           // slice length
  };

  Node& push(Op op);
  void backward_node(int id);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  int active_ = 0;
  std::unordered_map<const Tensor*, int> leaf_ids_;
  std::unordered_map<const Tensor*, Array*> redirects_;
};

// Primitives. Shapes must agree exactly (elementwise ops), conform
// (matmul/concat/slice), or the call throws DimensionError naming the
// primitive and the offending shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

// [m,k] x [k,n] -> [m,n], or [m,k] x [k] -> [m]
Var matmul(Var a, Var b);

// rank-1 concatenation along axis 0
Var concat(std::span<const Var> parts);
inline Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(std::span<const Var>(parts, 2));
}

// rank-1 contiguous view [offset, offset+len)
Var slice(Var v, int offset, int len);

Var sigmoid(Var v);
Var tanh(Var v);

// Row lookup into a rank-2 table; backward accumulates into that row only.
Var embedding_row(Var table, int row);

Var sum(Var v);
Var mean(Var v);
Var abs(Var v);

// Central-difference check of d(f)/d(point). f must build a scalar loss on
// the tape it is given and register `point` as a leaf somewhere inside.
// Returns max over coordinates of |analytic - fd| / max(1, |fd|).
// point.grad is clobbered.
Scalar grad_check(const std::function<Var(Tape&)>& f, Tensor& point, Scalar step);

}  // namespace rstack
