#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metassm/constraints.hpp"
#include "metassm/layers.hpp"
#include "metassm/trajectory.hpp"

namespace metassm::nssm {

using ad::Array;
using ad::Tape;
using ad::Var;
using nn::TapedWeights;
using nn::WeightSet;

// Per-channel affine normalization, fit on source data and stored with the
// model. Empty vectors mean identity.
struct ChannelNorm {
  std::vector<double> mean, istd;

  bool identity() const { return mean.empty(); }
  static ChannelNorm fit(std::span<const double> rows, std::size_t len, int nch);
  static ChannelNorm fit_shared(std::span<const double> rows, std::size_t len, int nch);
};

struct Normalizer {
  ChannelNorm x, u, y;
};

// normalization as tape ops (identity passes through)
Var apply_norm(Tape& t, const ChannelNorm& n, Var v);
Var apply_denorm(Tape& t, const ChannelNorm& n, Var v);

enum class StateConstraint { None, Conic };
enum class OutputConstraint { None, CurlFree };

// --- Case I: input-output history models -------------------------------------

struct Case1Config {
  int nu = 0, ny = 0;
  int H = 1, Hp = 1;
  int npsi = 1;
  std::vector<int> enc_hidden, trans_hidden, dec_hidden;
  nn::Activation act = nn::Activation::Swish;
  Normalizer norm;

  int enc_in() const { return H * (nu + ny); }
};

class Case1Model {
 public:
  explicit Case1Model(Case1Config cfg);

  const Case1Config& config() const { return cfg_; }
  const std::vector<nn::SubnetSpec>& subnets() const { return subnets_; }
  WeightSet init(uint64_t seed) const { return nn::init_weights(subnets_, seed); }

  // psi from H history rows (normalized internally). u_hist is (H*nu),
  // y_hist (H*ny), flattened time-major; either may be a matrix with one
  // window per column for batched evaluation.
  Var encode(Tape& t, const TapedWeights& tw, Var u_hist, Var y_hist) const;

  // H_p decoded outputs from recursive latent rollout, one Var per step
  // (each (ny) or (ny,N)); outputs are denormalized.
  std::vector<Var> rollout(Tape& t, const TapedWeights& tw, Var psi, int Hp) const;

  // Eq-style multi-step prediction loss over a batch of windows. Window
  // start s uses rows [s, s+H) as history and [s+H, s+H+Hp) as targets.
  Var loss(Tape& t, const TapedWeights& tw, const Trajectory& tr,
           std::span<const int> window_starts) const;

  // off-tape convenience: predictions for one window, physical units,
  // row-major (Hp, ny)
  std::vector<double> predict_window(const WeightSet& ws, const Trajectory& tr,
                                     int start, int Hp) const;

  int window_span() const { return cfg_.H + cfg_.Hp; }

 private:
  Case1Config cfg_;
  std::vector<nn::SubnetSpec> subnets_;
};

// --- Case II: state-input-output models --------------------------------------

struct Case2Config {
  int nx = 0, nu = 0, ny = 0;
  int npsi = 1;
  int NS = 1;  // multi-step prediction depth of the training loss
  std::vector<int> enc_hidden, trans_hidden, decx_hidden, decy_hidden;
  nn::Activation act = nn::Activation::Swish;
  StateConstraint px = StateConstraint::None;
  OutputConstraint py = OutputConstraint::None;
  std::optional<phys::ConicConstraint> conic;  // required when px == Conic
  phys::CurlFreeOutput curl;                   // coords; required when py == CurlFree
  int conic_rays = 0;                          // fc output dim when conic
  Normalizer norm;

  int enc_in() const { return nx + nu; }
};

struct Case2Step {
  Var x_next;  // physical units, feasible under the active state constraint
  Var y_next;
};

struct LossParts {
  Var total, recon, pred_x, pred_y;
};

class Case2Model {
 public:
  explicit Case2Model(Case2Config cfg);

  const Case2Config& config() const { return cfg_; }
  const std::vector<nn::SubnetSpec>& subnets() const { return subnets_; }
  WeightSet init(uint64_t seed) const { return nn::init_weights(subnets_, seed); }

  // One model step from leaf state/input vars (single sample). x must be a
  // leaf when the output path is curl-free.
  Case2Step step(Tape& t, const TapedWeights& tw, Var x, Var u) const;

  // EKF prediction model f(x,u): P_x . D_x . A . E
  Var predict_state(Tape& t, const TapedWeights& tw, Var x, Var u) const;
  // EKF measurement model h(x,u): P_y path on D_y . E (no transition)
  Var measure(Tape& t, const TapedWeights& tw, Var x, Var u) const;
  // autoencoder reconstruction P_x . D_x . E used for constraint projection
  Var reconstruct(Tape& t, const TapedWeights& tw, Var x, Var u) const;

  // Koopman-style training loss over sample indices: each start s supplies
  // x_s, u_s and NS-step targets x_{s+1..s+NS}, y_{s+1..s+NS}.
  LossParts loss(Tape& t, const TapedWeights& tw, const Trajectory& tr,
                 std::span<const int> starts) const;

  int window_span() const { return cfg_.NS + 1; }

 private:
  Var decode_state(Tape& t, const TapedWeights& tw, Var psi) const;
  Var decode_output(Tape& t, const TapedWeights& tw, Var psi, Var x_leaf) const;

  Case2Config cfg_;
  std::vector<nn::SubnetSpec> subnets_;
};

// Spec'd standalone form of the curl-free measurement path: the gradient
// of the scalar potential D_y(E(x,u)) with respect to the coordinate
// components of x. Errors if the path uses a non-smooth activation.
Array curlfree_eval(const Case2Model& model, const WeightSet& ws,
                    const Array& x, const Array& u);

// independent direct-summation MSE helper shared by losses
Var mse(Tape& t, Var pred, Var target);

}  // namespace metassm::nssm
