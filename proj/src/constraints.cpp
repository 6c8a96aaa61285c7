#include "metassm/constraints.hpp"

namespace metassm::phys {

RayValidation validate_rays(const Array& G, const Array& R, double tol) {
  RayValidation v;
  if (G.rank() != 2 || R.rank() != 2 || G.shape()[1] != R.shape()[0]) {
    v.ok = false;
    v.message = "dimension mismatch: G " + G.shape_str() + " vs R " + R.shape_str();
    return v;
  }
  const int m = G.shape()[0], nx = G.shape()[1], r = R.shape()[1];
  for (int j = 0; j < r; ++j) {
    double colmax = -1e300;
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int k = 0; k < nx; ++k) acc += G.at(i, k) * R.at(k, j);
      colmax = std::max(colmax, acc);
    }
    if (colmax > v.worst) {
      v.worst = colmax;
      v.worst_column = j;
    }
  }
  if (v.worst > tol) {
    v.ok = false;
    v.message = "ray column " + std::to_string(v.worst_column) +
                " violates G R <= 0 by " + std::to_string(v.worst);
  }
  return v;
}

Var conic_apply(Tape& tape, const ConicConstraint& c, const nn::TapedWeights& tw,
                Var decoded) {
  const auto& fc = tw.at("conic.0");
  const Array& d = tape.value(decoded);
  if (d.rows() != fc.spec.in_dim)
    throw Error("conic_apply: decoded dim " + d.shape_str() + " does not match fc input " +
                std::to_string(fc.spec.in_dim));
  if (fc.spec.out_dim != c.ray_count())
    throw Error("conic_apply: fc output dim " + std::to_string(fc.spec.out_dim) +
                " does not match ray count " + std::to_string(c.ray_count()));
  Var z = tape.matmul(fc.W, decoded);
  if (tape.value(z).rank() == 2)
    z = tape.add(z, tape.bcast_cols(fc.b, tape.value(z).shape()[1]));
  else
    z = tape.add(z, fc.b);
  Var mu = tape.relu(z);
  return tape.matmul(tape.constant(c.R), mu);
}

void require_smooth_path(const std::vector<nn::SubnetSpec>& subnets) {
  for (const auto& sn : subnets)
    for (const auto& l : sn.layers)
      if (l.act == nn::Activation::Relu || l.act == nn::Activation::Elu)
        throw Error("curl-free path requires twice-differentiable activations; subnet '" +
                    sn.name + "' uses '" + std::string(nn::activation_name(l.act)) + "'");
}

void require_smooth_path(const nn::WeightSet& ws, std::string_view prefix) {
  const std::string pfx = std::string(prefix) + ".";
  for (const auto& l : ws.layers)
    if (l.path.rfind(pfx, 0) == 0 &&
        (l.spec.act == nn::Activation::Relu || l.spec.act == nn::Activation::Elu))
      throw Error("curl-free path requires twice-differentiable activations; layer '" +
                  l.path + "' uses '" + std::string(nn::activation_name(l.spec.act)) + "'");
}

Var potential_gradient(Tape& tape, Var phi, Var x_leaf, const std::vector<int>& coords) {
  const Array& xv = tape.value(x_leaf);
  if (xv.rank() != 1) throw Error("potential_gradient: x must be rank 1");
  for (int c : coords)
    if (c < 0 || c >= xv.shape()[0])
      throw Error("potential_gradient: coordinate index " + std::to_string(c) +
                  " out of range for state dim " + std::to_string(xv.shape()[0]));
  Var g = tape.gradient(phi, x_leaf);
  std::vector<int32_t> idx(coords.begin(), coords.end());
  return tape.gather(g, idx);
}

Var potential_gradient_cols(Tape& tape, Var phi_cols, Var x_leaf,
                            const std::vector<int>& coords) {
  const Array& xv = tape.value(x_leaf);
  if (xv.rank() != 2) throw Error("potential_gradient_cols: X must be rank 2");
  Var s = tape.sum(phi_cols);
  Var g = tape.gradient(s, x_leaf);  // (n_x, N)
  // select coordinate rows with a constant selector matrix
  const int k = static_cast<int>(coords.size());
  Array sel({k, xv.shape()[0]});
  for (int i = 0; i < k; ++i) {
    if (coords[static_cast<std::size_t>(i)] < 0 ||
        coords[static_cast<std::size_t>(i)] >= xv.shape()[0])
      throw Error("potential_gradient_cols: coordinate index out of range");
    sel.at(i, coords[static_cast<std::size_t>(i)]) = 1.0;
  }
  return tape.matmul(tape.constant(sel), g);
}

}  // namespace metassm::phys
