#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "metassm/tape.hpp"

namespace metassm::nn {

using ad::Array;
using ad::Tape;
using ad::Var;

enum class Activation { Swish, Tanh, Relu, Elu, Identity };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation act = Activation::Identity;
};

// One named subnetwork of an NSSM (encoder, transition, decoder_x, ...).
struct SubnetSpec {
  std::string name;
  std::vector<LayerSpec> layers;
};

// Builds a fully connected chain: in -> hidden... -> out, hidden layers all
// `act`, output layer `out_act`.
SubnetSpec mlp_spec(std::string name, int in, const std::vector<int>& hidden, int out,
                    Activation act, Activation out_act = Activation::Identity);

struct Layer {
  std::string path;  // e.g. "encoder.0"
  LayerSpec spec;
  Array W;  // (out_dim, in_dim)
  Array b;  // (out_dim)
};

// Layer-structured trainable parameters. Immutable by convention: updates
// produce new WeightSets, so sets can be shared read-only across parallel
// task evaluations.
struct WeightSet {
  std::vector<Layer> layers;

  const Layer& at(std::string_view path) const;
  bool has(std::string_view path) const;
  std::size_t param_count() const;
  double global_norm() const;
};

// Glorot-uniform weights (+-sqrt(6/(in+out))), zero biases, reproducible
// under seed.
WeightSet init_weights(const std::vector<SubnetSpec>& subnets, uint64_t seed);

// dst + a * src, elementwise over identical structure.
WeightSet axpy(const WeightSet& dst, double a, const WeightSet& src);

// Scales every entry so the global norm is at most max_norm.
WeightSet clip_global_norm(const WeightSet& ws, double max_norm);

// --- on-tape view -----------------------------------------------------------

// Weights bound to a tape as vars, same ordering as the WeightSet.
struct TapedWeights {
  struct Entry {
    std::string path;
    LayerSpec spec;
    Var W, b;
  };
  std::vector<Entry> layers;

  const Entry& at(std::string_view path) const;
  std::vector<Var> flat_vars() const;  // W0,b0,W1,b1,...
};

TapedWeights bind(Tape& tape, const WeightSet& ws);
WeightSet extract(const TapedWeights& tw);  // copies the current values

// Applies the `prefix` subnetwork (layers path-prefixed "prefix.") to x.
// Rank-1 x is a single sample; rank-2 x holds one sample per column.
Var mlp_forward(Tape& tape, const TapedWeights& tw, std::string_view prefix, Var x);

// Plain (off-tape) forward pass for a WeightSet; convenience for oracles
// and cheap evaluations.
Array mlp_eval(const WeightSet& ws, std::string_view prefix, const Array& x);

// --- layer masks ------------------------------------------------------------

// Selects layer paths for inner-loop (ANIL) updates. Grammar: tokens joined
// by commas; "encoder.4" selects one layer, "transition.*" every layer whose
// subnet name starts with "transition", "*" everything.
class Mask {
 public:
  static Mask all();
  static Mask none();
  static Mask parse(std::string_view text);

  bool matches(std::string_view path) const;
  bool is_all() const { return all_; }
  std::string str() const;

 private:
  bool all_ = false;
  std::vector<std::string> exact_;
  std::vector<std::string> prefixes_;  // subnet-name prefixes from "name.*"
};

// --- serialization ----------------------------------------------------------

// Writes stem.json (manifest) and stem.bin (flat little-endian float64
// blob). Round-trips bit-exactly.
void save_weights(const WeightSet& ws, const std::string& stem);
WeightSet load_weights(const std::string& stem);

}  // namespace metassm::nn
