#include "metassm/layers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "metassm/rng.hpp"
#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "weight blobs are little-endian; byte-swapped platforms unsupported");

namespace metassm::nn {

using json = nlohmann::json;

Activation parse_activation(std::string_view name) {
  if (name == "swish") return Activation::Swish;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "elu") return Activation::Elu;
  if (name == "identity") return Activation::Identity;
  throw Error("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Swish: return "swish";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

SubnetSpec mlp_spec(std::string name, int in, const std::vector<int>& hidden, int out,
                    Activation act, Activation out_act) {
  SubnetSpec s;
  s.name = std::move(name);
  int prev = in;
  for (int h : hidden) {
    s.layers.push_back({prev, h, act});
    prev = h;
  }
  s.layers.push_back({prev, out, out_act});
  return s;
}

const Layer& WeightSet::at(std::string_view path) const {
  for (const auto& l : layers)
    if (l.path == path) return l;
  throw Error("weight set has no layer '" + std::string(path) + "'");
}

bool WeightSet::has(std::string_view path) const {
  for (const auto& l : layers)
    if (l.path == path) return true;
  return false;
}

std::size_t WeightSet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.W.size() + l.b.size();
  return n;
}

double WeightSet::global_norm() const {
  double s = 0.0;
  for (const auto& l : layers) {
    for (std::size_t i = 0; i < l.W.size(); ++i) s += l.W[i] * l.W[i];
    for (std::size_t i = 0; i < l.b.size(); ++i) s += l.b[i] * l.b[i];
  }
  return std::sqrt(s);
}

WeightSet init_weights(const std::vector<SubnetSpec>& subnets, uint64_t seed) {
  if (subnets.empty()) throw Error("init_weights: no subnetworks given");
  WeightSet ws;
  Rng rng(seed);
  for (const auto& sn : subnets) {
    int idx = 0;
    for (const auto& spec : sn.layers) {
      if (spec.in_dim < 1 || spec.out_dim < 1)
        throw Error("init_weights: non-positive dims in subnet '" + sn.name + "'");
      Layer l;
      l.path = sn.name + "." + std::to_string(idx++);
      l.spec = spec;
      const double a = std::sqrt(6.0 / (spec.in_dim + spec.out_dim));
      l.W = Array({spec.out_dim, spec.in_dim});
      for (std::size_t i = 0; i < l.W.size(); ++i) l.W[i] = rng.uniform(-a, a);
      l.b = Array({spec.out_dim});
      ws.layers.push_back(std::move(l));
    }
  }
  return ws;
}

WeightSet axpy(const WeightSet& dst, double a, const WeightSet& src) {
  if (dst.layers.size() != src.layers.size())
    throw Error("axpy: weight sets have different layer counts");
  WeightSet out = dst;
  for (std::size_t k = 0; k < out.layers.size(); ++k) {
    Layer& d = out.layers[k];
    const Layer& s = src.layers[k];
    if (d.path != s.path || !d.W.same_shape(s.W) || !d.b.same_shape(s.b))
      throw Error("axpy: structure mismatch at layer '" + d.path + "'");
    for (std::size_t i = 0; i < d.W.size(); ++i) d.W[i] += a * s.W[i];
    for (std::size_t i = 0; i < d.b.size(); ++i) d.b[i] += a * s.b[i];
  }
  return out;
}

WeightSet clip_global_norm(const WeightSet& ws, double max_norm) {
  const double n = ws.global_norm();
  if (n <= max_norm || n == 0.0) return ws;
  const double s = max_norm / n;
  WeightSet out = ws;
  for (auto& l : out.layers) {
    for (std::size_t i = 0; i < l.W.size(); ++i) l.W[i] *= s;
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] *= s;
  }
  return out;
}

const TapedWeights::Entry& TapedWeights::at(std::string_view path) const {
  for (const auto& e : layers)
    if (e.path == path) return e;
  throw Error("taped weights have no layer '" + std::string(path) + "'");
}

std::vector<Var> TapedWeights::flat_vars() const {
  std::vector<Var> vs;
  vs.reserve(layers.size() * 2);
  for (const auto& e : layers) {
    vs.push_back(e.W);
    vs.push_back(e.b);
  }
  return vs;
}

TapedWeights bind(Tape& tape, const WeightSet& ws) {
  TapedWeights tw;
  for (const auto& l : ws.layers)
    tw.layers.push_back({l.path, l.spec, tape.input(l.W), tape.input(l.b)});
  return tw;
}

WeightSet extract(const TapedWeights& tw) {
  WeightSet ws;
  for (const auto& e : tw.layers) {
    Layer l;
    l.path = e.path;
    l.spec = e.spec;
    if (!e.W.valid() || !e.b.valid()) throw Error("extract: unbound taped layer");
    l.W = e.W.tape->value(e.W);
    l.b = e.b.tape->value(e.b);
    ws.layers.push_back(std::move(l));
  }
  return ws;
}

namespace {

Var apply_activation(Tape& t, Activation a, Var z) {
  switch (a) {
    case Activation::Swish: return t.swish(z);
    case Activation::Tanh: return t.tanh(z);
    case Activation::Relu: return t.relu(z);
    case Activation::Elu: return t.elu(z, 1.0);
    case Activation::Identity: return z;
  }
  throw Error("apply_activation: bad enum");
}

}  // namespace

Var mlp_forward(Tape& tape, const TapedWeights& tw, std::string_view prefix, Var x) {
  const std::string pfx = std::string(prefix) + ".";
  bool found = false;
  for (const auto& e : tw.layers) {
    if (e.path.rfind(pfx, 0) != 0) continue;
    found = true;
    const Array& xin = tape.value(x);
    const int expect = e.spec.in_dim;
    if (xin.rows() != expect && !(xin.rank() == 1 && xin.shape()[0] == expect))
      throw Error("mlp_forward: layer '" + e.path + "' expects input dim " +
                  std::to_string(expect) + ", got " + xin.shape_str());
    Var z = tape.matmul(e.W, x);
    if (tape.value(z).rank() == 2)
      z = tape.add(z, tape.bcast_cols(e.b, tape.value(z).shape()[1]));
    else
      z = tape.add(z, e.b);
    x = apply_activation(tape, e.spec.act, z);
  }
  if (!found) throw Error("mlp_forward: no layers with prefix '" + std::string(prefix) + "'");
  return x;
}

Array mlp_eval(const WeightSet& ws, std::string_view prefix, const Array& x) {
  Tape t;
  TapedWeights tw = bind(t, ws);
  Var out = mlp_forward(t, tw, prefix, t.input(x));
  return t.value(out);
}

Mask Mask::all() {
  Mask m;
  m.all_ = true;
  return m;
}

Mask Mask::none() { return Mask{}; }

Mask Mask::parse(std::string_view text) {
  Mask m;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view tok = text.substr(pos, comma - pos);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) {
      if (tok == "*") {
        m.all_ = true;
      } else if (tok.size() > 2 && tok.substr(tok.size() - 2) == ".*") {
        m.prefixes_.emplace_back(tok.substr(0, tok.size() - 2));
      } else {
        m.exact_.emplace_back(tok);
      }
    }
    pos = comma + 1;
    if (comma == text.size()) break;
  }
  return m;
}

bool Mask::matches(std::string_view path) const {
  if (all_) return true;
  for (const auto& e : exact_)
    if (path == e) return true;
  const std::size_t dot = path.rfind('.');
  const std::string_view subnet = dot == std::string_view::npos ? path : path.substr(0, dot);
  for (const auto& p : prefixes_)
    if (subnet.rfind(p, 0) == 0) return true;
  return false;
}

std::string Mask::str() const {
  if (all_) return "*";
  std::string s;
  for (const auto& e : exact_) {
    if (!s.empty()) s += ",";
    s += e;
  }
  for (const auto& p : prefixes_) {
    if (!s.empty()) s += ",";
    s += p + ".*";
  }
  return s;
}

void save_weights(const WeightSet& ws, const std::string& stem) {
  json manifest;
  manifest["format"] = "metassm-weights-v1";
  manifest["dtype"] = "float64-le";
  manifest["blob"] = stem.substr(stem.find_last_of('/') + 1) + ".bin";
  json layers = json::array();
  std::ofstream blob(stem + ".bin", std::ios::binary);
  if (!blob) throw Error("save_weights: cannot open " + stem + ".bin");
  for (const auto& l : ws.layers) {
    layers.push_back({{"path", l.path},
                      {"rows", l.spec.out_dim},
                      {"cols", l.spec.in_dim},
                      {"activation", std::string(activation_name(l.spec.act))}});
    blob.write(reinterpret_cast<const char*>(l.W.data()),
               static_cast<std::streamsize>(l.W.size() * sizeof(double)));
    blob.write(reinterpret_cast<const char*>(l.b.data()),
               static_cast<std::streamsize>(l.b.size() * sizeof(double)));
  }
  manifest["layers"] = std::move(layers);
  std::ofstream mf(stem + ".json");
  if (!mf) throw Error("save_weights: cannot open " + stem + ".json");
  mf << manifest.dump(2) << "\n";
}

WeightSet load_weights(const std::string& stem) {
  std::ifstream mf(stem + ".json");
  if (!mf) throw Error("load_weights: cannot open " + stem + ".json");
  json manifest = json::parse(mf);
  if (manifest.value("format", "") != "metassm-weights-v1")
    throw Error("load_weights: bad manifest format in " + stem + ".json");
  std::ifstream blob(stem + ".bin", std::ios::binary);
  if (!blob) throw Error("load_weights: cannot open " + stem + ".bin");
  WeightSet ws;
  for (const auto& jl : manifest.at("layers")) {
    Layer l;
    l.path = jl.at("path").get<std::string>();
    l.spec.out_dim = jl.at("rows").get<int>();
    l.spec.in_dim = jl.at("cols").get<int>();
    l.spec.act = parse_activation(jl.at("activation").get<std::string>());
    l.W = Array({l.spec.out_dim, l.spec.in_dim});
    l.b = Array({l.spec.out_dim});
    blob.read(reinterpret_cast<char*>(l.W.data()),
              static_cast<std::streamsize>(l.W.size() * sizeof(double)));
    blob.read(reinterpret_cast<char*>(l.b.data()),
              static_cast<std::streamsize>(l.b.size() * sizeof(double)));
    if (!blob) throw Error("load_weights: blob truncated at layer '" + l.path + "'");
    ws.layers.push_back(std::move(l));
  }
  return ws;
}

}  // namespace metassm::nn
