#pragma once

#include <string>
#include <vector>

#include "metassm/layers.hpp"

namespace metassm::phys {

using ad::Array;
using ad::Tape;
using ad::Var;

// Feasible cone G x <= 0 described by rays: x = R mu with mu >= 0. The
// trainable map onto mu lives in the weight set as subnet "conic" (a single
// fully connected layer; ReLU is applied here, not stored in the spec).
struct ConicConstraint {
  Array G;  // (n_ineq, n_x)
  Array R;  // (n_x, r)

  int state_dim() const { return R.shape()[0]; }
  int ray_count() const { return R.shape()[1]; }
};

struct RayValidation {
  bool ok = true;
  double worst = 0.0;  // max over columns of max(G R_j)
  int worst_column = -1;
  std::string message;
};

// Checks G * R_j <= tol columnwise, reporting the worst violation.
RayValidation validate_rays(const Array& G, const Array& R, double tol = 1e-9);

// x_hat = R * relu(fc(decoded)). Accepts a single vector or one sample per
// column; the result is feasible for G x <= 0 up to float rounding.
Var conic_apply(Tape& tape, const ConicConstraint& c, const nn::TapedWeights& tw,
                Var decoded);

// Output path that is curl-free by construction: the model emits a scalar
// potential and the field is its gradient with respect to the Cartesian
// components of the state.
struct CurlFreeOutput {
  std::vector<int> coords;  // indices of [p_X, p_Y(, p_Z)] within x
};

// Every activation on a potential path must be twice differentiable.
// Throws naming the offending activation otherwise.
void require_smooth_path(const std::vector<nn::SubnetSpec>& subnets);
void require_smooth_path(const nn::WeightSet& ws, std::string_view prefix);

// d phi / d x restricted to coords, for a scalar potential built from leaf x.
// Stays on tape, so it can be differentiated again (EKF Jacobians) or used
// inside a training loss.
Var potential_gradient(Tape& tape, Var phi, Var x_leaf, const std::vector<int>& coords);

// Batched form: phi_cols is (1,N) built from leaf X (n_x,N), one sample per
// column. Column j of the result is the field at sample j. Uses the sum
// trick: d sum(phi) / d X has exactly the per-column gradients because
// distinct columns do not interact.
Var potential_gradient_cols(Tape& tape, Var phi_cols, Var x_leaf,
                            const std::vector<int>& coords);

}  // namespace metassm::phys
