#include "metassm/tape.hpp"

#include <cmath>
#include <cstring>

namespace metassm::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::Concat: return "concat";
    case Op::Gather: return "gather";
    case Op::Scatter: return "scatter";
    case Op::Sum: return "sum";
    case Op::Broadcast: return "broadcast";
    case Op::BcastCols: return "bcast_cols";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Heaviside: return "heaviside";
    case Op::DExpNeg: return "dexp_neg";
    case Op::Relu: return "relu";
    case Op::Elu: return "elu";
    case Op::Abs: return "abs";
    case Op::Sign: return "sign";
  }
  return "?";
}

namespace {

double sigmoid_val(double z) {
  // branch on sign to avoid overflow in exp
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<int> to_shape(const std::vector<int32_t>& v) {
  return std::vector<int>(v.begin(), v.end());
}

}  // namespace

const Node& Tape::node(int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw Error("tape: node id " + std::to_string(id) + " out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

void Tape::check_ids(std::initializer_list<Var> vs) const {
  for (const Var& v : vs) {
    if (v.tape != this) throw Error("tape: var belongs to a different tape");
    node(v.id);
  }
}

Var Tape::push(Node n) {
  eval(n);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::input(Array v, std::string name) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  const auto id = static_cast<int32_t>(nodes_.size() - 1);
  if (!nodes_.back().name.empty()) named_[nodes_.back().name] = id;
  return Var{this, id};
}

void Tape::truncate(std::size_t n) {
  if (n > nodes_.size()) throw Error("tape: truncate beyond size");
  for (auto it = named_.begin(); it != named_.end();) {
    if (static_cast<std::size_t>(it->second) >= n)
      it = named_.erase(it);
    else
      ++it;
  }
  nodes_.resize(n);
}

const Array& Tape::forward(const std::map<std::string, Array>& inputs) {
  if (nodes_.empty()) throw Error("tape: forward on empty tape");
  for (const auto& [name, val] : inputs) {
    auto it = named_.find(name);
    if (it == named_.end()) throw Error("tape: no input named '" + name + "'");
    Node& leaf = nodes_[static_cast<std::size_t>(it->second)];
    if (!leaf.value.same_shape(val))
      throw Error("tape: input '" + name + "' shape " + val.shape_str() +
                  " does not match bound shape " + leaf.value.shape_str());
    leaf.value = val;
  }
  for (auto& n : nodes_)
    if (n.op != Op::Leaf) eval(n);
  return nodes_.back().value;
}

void Tape::eval(Node& n) const {
  auto in = [&](std::size_t k) -> const Array& {
    return nodes_[static_cast<std::size_t>(n.inputs[k])].value;
  };
  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      if (!a.same_shape(b))
        throw Error(std::string("tape: ") + op_name(n.op) + " shape mismatch " +
                    a.shape_str() + " vs " + b.shape_str());
      Array out(a.shape());
      const std::size_t m = a.size();
      if (n.op == Op::Add)
        for (std::size_t i = 0; i < m; ++i) out[i] = a[i] + b[i];
      else if (n.op == Op::Sub)
        for (std::size_t i = 0; i < m; ++i) out[i] = a[i] - b[i];
      else
        for (std::size_t i = 0; i < m; ++i) out[i] = a[i] * b[i];
      n.value = std::move(out);
      return;
    }
    case Op::MatMul: {
      const Array& a = in(0);
      const Array& b = in(1);
      if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2))
        throw Error("tape: matmul needs (matrix, matrix|vector), got " +
                    a.shape_str() + " x " + b.shape_str());
      const int m = a.shape()[0], k = a.shape()[1];
      if (b.shape()[0] != k)
        throw Error("tape: matmul inner dims " + a.shape_str() + " x " + b.shape_str());
      if (b.rank() == 1) {
        Array out({m});
        for (int i = 0; i < m; ++i) {
          double acc = 0.0;
          const double* arow = a.data() + static_cast<std::size_t>(i) * k;
          for (int j = 0; j < k; ++j) acc += arow[j] * b[static_cast<std::size_t>(j)];
          out[static_cast<std::size_t>(i)] = acc;
        }
        n.value = std::move(out);
      } else {
        const int p = b.shape()[1];
        Array out({m, p});
        for (int i = 0; i < m; ++i) {
          const double* arow = a.data() + static_cast<std::size_t>(i) * k;
          double* orow = out.data() + static_cast<std::size_t>(i) * p;
          for (int j = 0; j < k; ++j) {
            const double av = arow[j];
            const double* brow = b.data() + static_cast<std::size_t>(j) * p;
            for (int c = 0; c < p; ++c) orow[c] += av * brow[c];
          }
        }
        n.value = std::move(out);
      }
      return;
    }
    case Op::Transpose: {
      const Array& a = in(0);
      if (a.rank() != 2) throw Error("tape: transpose needs rank 2, got " + a.shape_str());
      const int r = a.shape()[0], c = a.shape()[1];
      Array out({c, r});
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
      n.value = std::move(out);
      return;
    }
    case Op::Reshape: {
      const Array& a = in(0);
      auto shape = to_shape(n.ints);
      if (Array::count(shape) != a.size())
        throw Error("tape: reshape " + a.shape_str() + " -> " + Array::shape_str(shape));
      n.value = Array(shape, std::vector<double>(a.data(), a.data() + a.size()));
      return;
    }
    case Op::Concat: {
      std::size_t total = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(k).rank() != 1)
          throw Error("tape: concat needs rank-1 parts, got " + in(k).shape_str());
        total += in(k).size();
      }
      Array out({static_cast<int>(total)});
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        std::memcpy(out.data() + off, in(k).data(), in(k).size() * sizeof(double));
        off += in(k).size();
      }
      n.value = std::move(out);
      return;
    }
    case Op::Gather: {
      const Array& a = in(0);
      if (a.rank() != 1) throw Error("tape: gather needs rank 1, got " + a.shape_str());
      Array out({static_cast<int>(n.ints.size())});
      for (std::size_t i = 0; i < n.ints.size(); ++i) {
        const int32_t j = n.ints[i];
        if (j < 0 || j >= a.shape()[0])
          throw Error("tape: gather index " + std::to_string(j) + " out of range for " +
                      a.shape_str());
        out[i] = a[static_cast<std::size_t>(j)];
      }
      n.value = std::move(out);
      return;
    }
    case Op::Scatter: {
      // scatter-add: repeated indices accumulate, so it is the exact adjoint
      // of gather even when gather indices overlap
      const Array& a = in(0);
      const int total = n.ints.back();  // ints = [indices..., n]
      Array out({total});
      for (std::size_t i = 0; i + 1 < n.ints.size(); ++i)
        out[static_cast<std::size_t>(n.ints[i])] += a[i];
      n.value = std::move(out);
      return;
    }
    case Op::Sum: {
      const Array& a = in(0);
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      n.value = Array::scalar(acc);
      return;
    }
    case Op::Broadcast: {
      const Array& a = in(0);
      if (!a.is_scalar()) throw Error("tape: broadcast needs a scalar");
      Array out(to_shape(n.ints));
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[0];
      n.value = std::move(out);
      return;
    }
    case Op::BcastCols: {
      const Array& a = in(0);
      if (a.rank() != 1) throw Error("tape: bcast_cols needs rank 1, got " + a.shape_str());
      const int r = a.shape()[0], c = static_cast<int>(n.ints[0]);
      Array out({r, c});
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) = a[static_cast<std::size_t>(i)];
      n.value = std::move(out);
      return;
    }
    case Op::Scale: {
      const Array& a = in(0);
      Array out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = n.c0 * a[i];
      n.value = std::move(out);
      return;
    }
    case Op::Shift: {
      const Array& a = in(0);
      Array out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + n.c0;
      n.value = std::move(out);
      return;
    }
    case Op::Sigmoid:
    case Op::Tanh:
    case Op::Exp:
    case Op::Heaviside:
    case Op::DExpNeg:
    case Op::Relu:
    case Op::Elu:
    case Op::Abs:
    case Op::Sign: {
      const Array& a = in(0);
      Array out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double z = a[i];
        double v = 0.0;
        switch (n.op) {
          case Op::Sigmoid: v = sigmoid_val(z); break;
          case Op::Tanh: v = std::tanh(z); break;
          case Op::Exp: v = std::exp(z); break;
          case Op::Heaviside: v = z > 0.0 ? 1.0 : 0.0; break;
          case Op::DExpNeg: v = z <= 0.0 ? std::exp(z) : 0.0; break;
          case Op::Relu: v = z > 0.0 ? z : 0.0; break;
          case Op::Elu: v = z > 0.0 ? z : n.c0 * (std::exp(z) - 1.0); break;
          case Op::Abs: v = std::fabs(z); break;
          case Op::Sign: v = z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0); break;
          default: break;
        }
        out[i] = v;
      }
      n.value = std::move(out);
      return;
    }
  }
}

Var Tape::add(Var a, Var b) {
  check_ids({a, b});
  Node n;
  n.op = Op::Add;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_ids({a, b});
  Node n;
  n.op = Op::Sub;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_ids({a, b});
  Node n;
  n.op = Op::Mul;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check_ids({a, b});
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  check_ids({a});
  Node n;
  n.op = Op::Transpose;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  check_ids({a});
  Node n;
  n.op = Op::Reshape;
  n.inputs = {a.id};
  n.ints.assign(shape.begin(), shape.end());
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error("tape: concat of nothing");
  Node n;
  n.op = Op::Concat;
  std::vector<int32_t> offsets;
  int32_t off = 0;
  for (const Var& p : parts) {
    check_ids({p});
    n.inputs.push_back(p.id);
    offsets.push_back(off);
    off += static_cast<int32_t>(node(p.id).value.size());
  }
  n.ints = std::move(offsets);
  return push(std::move(n));
}

Var Tape::gather(Var a, std::vector<int32_t> idx) {
  check_ids({a});
  Node n;
  n.op = Op::Gather;
  n.inputs = {a.id};
  n.ints = std::move(idx);
  return push(std::move(n));
}

Var Tape::scatter(Var a, std::vector<int32_t> idx, int total) {
  check_ids({a});
  if (idx.size() != node(a.id).value.size())
    throw Error("tape: scatter index count mismatch");
  Node n;
  n.op = Op::Scatter;
  n.inputs = {a.id};
  n.ints = std::move(idx);
  n.ints.push_back(total);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check_ids({a});
  Node n;
  n.op = Op::Sum;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::broadcast(Var s, std::vector<int> shape) {
  check_ids({s});
  Node n;
  n.op = Op::Broadcast;
  n.inputs = {s.id};
  n.ints.assign(shape.begin(), shape.end());
  return push(std::move(n));
}

Var Tape::bcast_cols(Var v, int cols) {
  check_ids({v});
  Node n;
  n.op = Op::BcastCols;
  n.inputs = {v.id};
  n.ints = {cols};
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  check_ids({a});
  Node n;
  n.op = Op::Scale;
  n.inputs = {a.id};
  n.c0 = c;
  return push(std::move(n));
}

Var Tape::shift(Var a, double c) {
  check_ids({a});
  Node n;
  n.op = Op::Shift;
  n.inputs = {a.id};
  n.c0 = c;
  return push(std::move(n));
}

#define METASSM_UNARY(fn, OPK)            \
  Var Tape::fn(Var a) {                   \
    check_ids({a});                       \
    Node n;                               \
    n.op = Op::OPK;                       \
    n.inputs = {a.id};                    \
    return push(std::move(n));            \
  }
METASSM_UNARY(sigmoid, Sigmoid)
METASSM_UNARY(tanh, Tanh)
METASSM_UNARY(exp, Exp)
METASSM_UNARY(heaviside, Heaviside)
METASSM_UNARY(dexp_neg, DExpNeg)
METASSM_UNARY(relu, Relu)
METASSM_UNARY(abs, Abs)
METASSM_UNARY(sign, Sign)
#undef METASSM_UNARY

Var Tape::elu(Var a, double alpha) {
  check_ids({a});
  Node n;
  n.op = Op::Elu;
  n.inputs = {a.id};
  n.c0 = alpha;
  return push(std::move(n));
}

Var Tape::zeros_like(Var a) {
  check_ids({a});
  return constant(Array::zeros(node(a.id).value.shape()));
}

Var Tape::slice(Var a, int start, int len) {
  std::vector<int32_t> idx(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) idx[static_cast<std::size_t>(i)] = start + i;
  return gather(a, std::move(idx));
}

Var Tape::mean_sq(Var a) {
  const double n = static_cast<double>(node(a.id).value.size());
  return scale(sum(mul(a, a)), 1.0 / n);
}

// Adjoint contributions for each input of node `id` given the node's output
// adjoint g. Built from primitives so results remain differentiable.
std::vector<Var> Tape::backward(int32_t id, Var g) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  const Var self{this, id};
  auto inv = [&](std::size_t k) { return Var{this, n.inputs[k]}; };
  switch (n.op) {
    case Op::Leaf:
      return {};
    case Op::Add:
      return {g, g};
    case Op::Sub:
      return {g, scale(g, -1.0)};
    case Op::Mul:
      return {mul(g, inv(1)), mul(g, inv(0))};
    case Op::MatMul: {
      const Array& b = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
      if (b.rank() == 2) {
        return {matmul(g, transpose(inv(1))), matmul(transpose(inv(0)), g)};
      }
      // A (m,k) x b (k): dA = outer(g, b), db = A^T g
      const Array& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
      const int m = a.shape()[0], k = a.shape()[1];
      Var gm = reshape(g, {m, 1});
      Var bm = reshape(inv(1), {1, k});
      return {matmul(gm, bm), matmul(transpose(inv(0)), g)};
    }
    case Op::Transpose:
      return {transpose(g)};
    case Op::Reshape: {
      const Array& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
      return {reshape(g, a.shape())};
    }
    case Op::Concat: {
      std::vector<Var> out;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const int start = n.ints[k];
        const int len =
            static_cast<int>(nodes_[static_cast<std::size_t>(n.inputs[k])].value.size());
        out.push_back(slice(g, start, len));
      }
      return out;
    }
    case Op::Gather: {
      const Array& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
      return {scatter(g, n.ints, a.shape()[0])};
    }
    case Op::Scatter: {
      std::vector<int32_t> idx(n.ints.begin(), n.ints.end() - 1);
      return {gather(g, std::move(idx))};
    }
    case Op::Sum: {
      const Array& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
      return {broadcast(g, a.shape())};
    }
    case Op::Broadcast:
      return {sum(g)};
    case Op::BcastCols: {
      const int c = static_cast<int>(n.ints[0]);
      return {matmul(g, constant(Array::ones({c})))};
    }
    case Op::Scale:
      return {scale(g, n.c0)};
    case Op::Shift:
      return {g};
    case Op::Sigmoid: {
      // y' = y (1 - y)
      return {mul(g, sub(self, mul(self, self)))};
    }
    case Op::Tanh: {
      // y' = 1 - y^2
      return {mul(g, shift(scale(mul(self, self), -1.0), 1.0))};
    }
    case Op::Exp:
      return {mul(g, self)};
    case Op::Heaviside:
    case Op::Sign:
      break;  // handled below
    case Op::DExpNeg:
      // d/dx [exp(x) for x<=0 else 0] = same function
      return {mul(g, self)};
    case Op::Relu:
      return {mul(g, heaviside(inv(0)))};
    case Op::Elu:
      // x>0: 1; x<=0: alpha e^x
      return {mul(g, add(heaviside(inv(0)), scale(dexp_neg(inv(0)), n.c0)))};
    case Op::Abs:
      return {mul(g, sign(inv(0)))};
  }
  if (n.op == Op::Heaviside) {
    // subgradient convention: derivative is zero everywhere
    return {zeros_like(inv(0))};
  }
  throw Error(std::string("tape: primitive '") + op_name(n.op) +
              "' has no registered derivative");
}

std::vector<Var> Tape::gradient(Var output, std::span<const Var> wrt) {
  check_ids({output});
  for (const Var& w : wrt) check_ids({w});
  const Array& ov = node(output.id).value;
  if (!ov.is_scalar())
    throw Error("tape: gradient output must be scalar, got shape " + ov.shape_str());

  std::vector<int32_t> adj(static_cast<std::size_t>(output.id) + 1, -1);
  adj[static_cast<std::size_t>(output.id)] =
      input(Array(ov.shape(), std::vector<double>(1, 1.0))).id;

  for (int32_t i = output.id; i >= 0; --i) {
    const int32_t gid = adj[static_cast<std::size_t>(i)];
    if (gid < 0) continue;
    if (nodes_[static_cast<std::size_t>(i)].op == Op::Leaf) continue;
    // copy input list: backward() appends nodes and may invalidate references
    const std::vector<int32_t> ins = nodes_[static_cast<std::size_t>(i)].inputs;
    std::vector<Var> contrib = backward(i, Var{this, gid});
    for (std::size_t k = 0; k < ins.size(); ++k) {
      int32_t& slot = adj[static_cast<std::size_t>(ins[k])];
      slot = slot < 0 ? contrib[k].id : add(Var{this, slot}, contrib[k]).id;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const int32_t gid =
        w.id <= output.id ? adj[static_cast<std::size_t>(w.id)] : -1;
    if (gid >= 0)
      out.push_back(Var{this, gid});
    else
      out.push_back(zeros_like(w));
  }
  return out;
}

Var Tape::gradient(Var output, Var wrt) {
  const Var ws[1] = {wrt};
  return gradient(output, std::span<const Var>(ws, 1))[0];
}

Array hessian(Tape& tape, Var f, Var x) {
  const Array& xv = tape.value(x);
  Var g = tape.gradient(f, x);
  if (xv.is_scalar()) {
    Var g2 = tape.gradient(tape.reshape(g, {}), x);
    return Array::scalar(tape.value(g2)[0]);
  }
  if (xv.rank() != 1) throw Error("hessian: x must be scalar or rank 1");
  const int n = xv.shape()[0];
  Array h({n, n});
  for (int i = 0; i < n; ++i) {
    Var gi = tape.reshape(tape.gather(g, {i}), {});
    Var row = tape.gradient(gi, x);
    const Array& rv = tape.value(row);
    for (int j = 0; j < n; ++j) h.at(i, j) = rv[static_cast<std::size_t>(j)];
  }
  return h;
}

Array jacobian(Tape& tape, Var f, Var x) {
  const Array& fv = tape.value(f);
  const Array& xv = tape.value(x);
  if (fv.rank() != 1 || xv.rank() != 1)
    throw Error("jacobian: needs rank-1 output and input, got " + fv.shape_str() +
                " and " + xv.shape_str());
  const int m = fv.shape()[0], n = xv.shape()[0];
  Array j({m, n});
  for (int i = 0; i < m; ++i) {
    Var fi = tape.reshape(tape.gather(f, {i}), {});
    Var row = tape.gradient(fi, x);
    const Array& rv = tape.value(row);
    for (int c = 0; c < n; ++c) j.at(i, c) = rv[static_cast<std::size_t>(c)];
  }
  return j;
}

}  // namespace metassm::ad
