#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metassm/array.hpp"

namespace metassm::ad {

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  Transpose,
  Reshape,
  Concat,
  Gather,
  Scatter,
  Sum,
  Broadcast,
  BcastCols,
  Scale,
  Shift,
  Sigmoid,
  Tanh,
  Exp,
  Heaviside,
  DExpNeg,
  Relu,
  Elu,
  Abs,
  Sign,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::Leaf;
  std::vector<int32_t> inputs;
  Array value;
  double c0 = 0.0;            // scale factor / shift offset / elu alpha
  std::vector<int32_t> ints;  // gather indices, reshape/scatter/broadcast shape, concat offsets
  std::string name;           // leaves only; used by forward() rebinding
};

// Append-only record of primitive operations, evaluated eagerly.
//
// Nodes are in topological order by construction. gradient() appends the
// backward computation as ordinary nodes, so gradients themselves stay
// differentiable; nesting gradient() gives higher-order derivatives.
// A tape is single-threaded; distinct tapes over shared read-only data
// may run in parallel.
class Tape {
 public:
  Var input(Array v, std::string name = {});
  Var constant(Array v) { return input(std::move(v)); }
  Var constant(double v) { return input(Array::scalar(v)); }

  std::size_t size() const { return nodes_.size(); }
  // Drops every node with id >= n. Handles into the dropped range become invalid.
  void truncate(std::size_t n);

  const Array& value(Var v) const { return node(v.id).value; }
  const Node& node(int32_t id) const;

  // Rebinds named leaves, recomputes every node in order, returns the value
  // of the terminal (last) node. Unknown names and shape changes error.
  const Array& forward(const std::map<std::string, Array>& inputs);

  // Reverse-mode gradient of a scalar output with respect to each wrt node.
  // The result vars are on this tape and remain differentiable. Nodes that do
  // not influence the output yield zero-valued constants.
  std::vector<Var> gradient(Var output, std::span<const Var> wrt);
  Var gradient(Var output, Var wrt);

  // primitive builders (eager evaluation)
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var matmul(Var a, Var b);          // (m,k)x(k,n)->(m,n) or (m,k)x(k)->(m)
  Var transpose(Var a);              // rank 2
  Var reshape(Var a, std::vector<int> shape);
  Var concat(std::span<const Var> parts);  // rank-1 parts
  Var gather(Var a, std::vector<int32_t> idx);            // rank 1
  Var scatter(Var a, std::vector<int32_t> idx, int n);    // rank 1, scatter-add
  Var sum(Var a);                    // -> scalar
  Var broadcast(Var scalar, std::vector<int> shape);
  Var bcast_cols(Var v, int n);      // column vector replicated to (len,n)
  Var scale(Var a, double c);
  Var shift(Var a, double c);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var heaviside(Var a);  // 1 for x>0 else 0; derivative registered as zero
  Var dexp_neg(Var a);   // exp(x) for x<=0 else 0; its own derivative
  Var relu(Var a);
  Var elu(Var a, double alpha = 1.0);
  Var abs(Var a);
  Var sign(Var a);  // -1/0/1; no registered derivative
  Var zeros_like(Var a);

  // conveniences built from primitives
  Var neg(Var a) { return scale(a, -1.0); }
  Var swish(Var a) { return mul(a, sigmoid(a)); }
  Var square(Var a) { return mul(a, a); }
  Var slice(Var a, int start, int len);
  Var mean_sq(Var a);  // sum(a*a)/numel

 private:
  Var push(Node n);
  void eval(Node& n) const;
  void check_ids(std::initializer_list<Var> vs) const;
  // adjoint contributions of node id's inputs given output adjoint g
  std::vector<Var> backward(int32_t id, Var g);

  std::vector<Node> nodes_;
  std::map<std::string, int32_t> named_;
};

// Scalar second derivative / Hessian of a scalar-valued node f with respect
// to x. Scalar x gives a scalar array; rank-1 x of length n gives (n,n).
Array hessian(Tape& tape, Var f, Var x);

// Jacobian of a rank-1 node f with respect to x; row i is d f_i / d x.
Array jacobian(Tape& tape, Var f, Var x);

}  // namespace metassm::ad
