#include "metassm/nssm.hpp"

#include <cmath>

namespace metassm::nssm {

namespace {

// rank-1: concat; rank-2: stack rows via constant selectors
Var vcat2(Tape& t, Var a, Var b) {
  const Array& av = t.value(a);
  const Array& bv = t.value(b);
  if (av.rank() == 1 && bv.rank() == 1) {
    const Var parts[2] = {a, b};
    return t.concat(std::span<const Var>(parts, 2));
  }
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1])
    throw Error("vcat: incompatible shapes " + av.shape_str() + " / " + bv.shape_str());
  const int ra = av.shape()[0], rb = bv.shape()[0];
  Array s1({ra + rb, ra}), s2({ra + rb, rb});
  for (int i = 0; i < ra; ++i) s1.at(i, i) = 1.0;
  for (int i = 0; i < rb; ++i) s2.at(ra + i, i) = 1.0;
  return t.add(t.matmul(t.constant(s1), a), t.matmul(t.constant(s2), b));
}

ChannelNorm tile_norm(const ChannelNorm& n, int reps) {
  if (n.identity()) return n;
  ChannelNorm out;
  for (int r = 0; r < reps; ++r) {
    out.mean.insert(out.mean.end(), n.mean.begin(), n.mean.end());
    out.istd.insert(out.istd.end(), n.istd.begin(), n.istd.end());
  }
  return out;
}

// flattened history block [rows s..s+H) of an n-channel series], one window
// per column
Array window_matrix(const std::vector<double>& series, int nch,
                    std::span<const int> starts, int H) {
  const int n = static_cast<int>(starts.size());
  Array m({H * nch, n});
  for (int j = 0; j < n; ++j)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < nch; ++c)
        m.at(r * nch + c, j) =
            series[(static_cast<std::size_t>(starts[static_cast<std::size_t>(j)]) + r) * nch + c];
  return m;
}

// rows at offset `step` after each start, one sample per column
Array rows_matrix(const std::vector<double>& series, int nch,
                  std::span<const int> starts, int step) {
  const int n = static_cast<int>(starts.size());
  Array m({nch, n});
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < nch; ++c)
      m.at(c, j) =
          series[(static_cast<std::size_t>(starts[static_cast<std::size_t>(j)]) + step) * nch + c];
  return m;
}

}  // namespace

ChannelNorm ChannelNorm::fit(std::span<const double> rows, std::size_t len, int nch) {
  ChannelNorm n;
  if (len == 0 || nch == 0) return n;
  n.mean.assign(static_cast<std::size_t>(nch), 0.0);
  n.istd.assign(static_cast<std::size_t>(nch), 1.0);
  for (std::size_t t = 0; t < len; ++t)
    for (int c = 0; c < nch; ++c) n.mean[static_cast<std::size_t>(c)] += rows[t * nch + c];
  for (auto& m : n.mean) m /= static_cast<double>(len);
  std::vector<double> var(static_cast<std::size_t>(nch), 0.0);
  for (std::size_t t = 0; t < len; ++t)
    for (int c = 0; c < nch; ++c) {
      const double d = rows[t * nch + c] - n.mean[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] += d * d;
    }
  for (int c = 0; c < nch; ++c) {
    const double sd = std::sqrt(var[static_cast<std::size_t>(c)] / static_cast<double>(len));
    n.istd[static_cast<std::size_t>(c)] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return n;
}

ChannelNorm ChannelNorm::fit_shared(std::span<const double> rows, std::size_t len, int nch) {
  ChannelNorm n = fit(rows, len, nch);
  if (n.identity()) return n;
  double pooled = 0.0;
  for (double i : n.istd) pooled += 1.0 / (i * i);
  const double sd = std::sqrt(pooled / static_cast<double>(nch));
  const double shared = sd > 1e-12 ? 1.0 / sd : 1.0;
  for (auto& i : n.istd) i = shared;
  return n;
}

Var apply_norm(Tape& t, const ChannelNorm& n, Var v) {
  if (n.identity()) return v;
  const Array& val = t.value(v);
  Var mean = t.constant(Array::vec(n.mean));
  Var istd = t.constant(Array::vec(n.istd));
  if (val.rank() == 2) {
    const int cols = val.shape()[1];
    return t.mul(t.sub(v, t.bcast_cols(mean, cols)), t.bcast_cols(istd, cols));
  }
  return t.mul(t.sub(v, mean), istd);
}

Var apply_denorm(Tape& t, const ChannelNorm& n, Var v) {
  if (n.identity()) return v;
  std::vector<double> sd(n.istd.size());
  for (std::size_t i = 0; i < sd.size(); ++i) sd[i] = 1.0 / n.istd[i];
  Var mean = t.constant(Array::vec(n.mean));
  Var stdv = t.constant(Array::vec(sd));
  const Array& val = t.value(v);
  if (val.rank() == 2) {
    const int cols = val.shape()[1];
    return t.add(t.mul(v, t.bcast_cols(stdv, cols)), t.bcast_cols(mean, cols));
  }
  return t.add(t.mul(v, stdv), mean);
}

Var mse(Tape& t, Var pred, Var target) {
  Var d = t.sub(pred, target);
  return t.mean_sq(d);
}

// --- Case I -------------------------------------------------------------------

Case1Model::Case1Model(Case1Config cfg) : cfg_(std::move(cfg)) {
  if (cfg_.ny < 1 || cfg_.H < 1 || cfg_.Hp < 1 || cfg_.npsi < 1)
    throw Error("case1: dims/windows must be positive");
  subnets_.push_back(nn::mlp_spec("encoder", cfg_.enc_in(), cfg_.enc_hidden, cfg_.npsi, cfg_.act));
  subnets_.push_back(
      nn::mlp_spec("transition", cfg_.npsi, cfg_.trans_hidden, cfg_.npsi, cfg_.act));
  subnets_.push_back(nn::mlp_spec("decoder_y", cfg_.npsi, cfg_.dec_hidden, cfg_.ny, cfg_.act));
}

Var Case1Model::encode(Tape& t, const TapedWeights& tw, Var u_hist, Var y_hist) const {
  Var yn = apply_norm(t, tile_norm(cfg_.norm.y, cfg_.H), y_hist);
  Var in = yn;
  if (cfg_.nu > 0) {
    Var un = apply_norm(t, tile_norm(cfg_.norm.u, cfg_.H), u_hist);
    in = vcat2(t, un, yn);
  }
  const Array& iv = t.value(in);
  if (iv.rows() != cfg_.enc_in())
    throw Error("case1 encode: window has " + std::to_string(iv.rows()) + " rows, expected " +
                std::to_string(cfg_.enc_in()) + " (H=" + std::to_string(cfg_.H) + ")");
  return nn::mlp_forward(t, tw, "encoder", in);
}

std::vector<Var> Case1Model::rollout(Tape& t, const TapedWeights& tw, Var psi, int Hp) const {
  if (Hp < 1) throw Error("case1 rollout: Hp must be >= 1");
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(Hp));
  for (int k = 0; k < Hp; ++k) {
    psi = nn::mlp_forward(t, tw, "transition", psi);
    Var y = nn::mlp_forward(t, tw, "decoder_y", psi);
    outs.push_back(apply_denorm(t, cfg_.norm.y, y));
  }
  return outs;
}

Var Case1Model::loss(Tape& t, const TapedWeights& tw, const Trajectory& tr,
                     std::span<const int> window_starts) const {
  if (window_starts.empty()) throw Error("case1 loss: empty window batch");
  for (int s : window_starts)
    if (s < 0 || static_cast<std::size_t>(s + cfg_.H + cfg_.Hp) > tr.len)
      throw Error("case1 loss: window start " + std::to_string(s) + " out of bounds");
  Var yh = t.constant(window_matrix(tr.y, cfg_.ny, window_starts, cfg_.H));
  Var uh = cfg_.nu > 0 ? t.constant(window_matrix(tr.u, cfg_.nu, window_starts, cfg_.H))
                       : Var{};
  Var psi = encode(t, tw, uh, yh);
  Var acc = t.constant(0.0);
  for (int k = 0; k < cfg_.Hp; ++k) {
    psi = nn::mlp_forward(t, tw, "transition", psi);
    Var yhat = nn::mlp_forward(t, tw, "decoder_y", psi);  // normalized space
    Var target =
        apply_norm(t, cfg_.norm.y, t.constant(rows_matrix(tr.y, cfg_.ny, window_starts, cfg_.H + k)));
    Var d = t.sub(yhat, target);
    acc = t.add(acc, t.sum(t.mul(d, d)));
  }
  const double denom =
      static_cast<double>(window_starts.size()) * cfg_.Hp * cfg_.ny;
  return t.scale(acc, 1.0 / denom);
}

std::vector<double> Case1Model::predict_window(const WeightSet& ws, const Trajectory& tr,
                                               int start, int Hp) const {
  Tape t;
  TapedWeights tw = bind(t, ws);
  const int starts[1] = {start};
  Var yh = t.constant(window_matrix(tr.y, cfg_.ny, std::span<const int>(starts, 1), cfg_.H));
  Var uh = cfg_.nu > 0
               ? t.constant(window_matrix(tr.u, cfg_.nu, std::span<const int>(starts, 1), cfg_.H))
               : Var{};
  Var psi = encode(t, tw, uh, yh);
  auto outs = rollout(t, tw, psi, Hp);
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(Hp) * cfg_.ny);
  for (const Var& o : outs) {
    const Array& v = t.value(o);
    for (int c = 0; c < cfg_.ny; ++c) flat.push_back(v[static_cast<std::size_t>(c)]);
  }
  return flat;
}

// --- Case II ------------------------------------------------------------------

Case2Model::Case2Model(Case2Config cfg) : cfg_(std::move(cfg)) {
  if (cfg_.nx < 1 || cfg_.ny < 1 || cfg_.npsi < 1 || cfg_.NS < 1)
    throw Error("case2: dims must be positive");
  if (cfg_.px == StateConstraint::Conic) {
    if (!cfg_.conic) throw Error("case2: conic constraint selected but no (G,R) supplied");
    if (cfg_.conic->state_dim() != cfg_.nx)
      throw Error("case2: ray matrix rows do not match state dim");
    if (!cfg_.norm.x.identity())
      throw Error("case2: conic state constraint requires identity x normalization");
    auto rep = phys::validate_rays(cfg_.conic->G, cfg_.conic->R);
    if (!rep.ok) throw Error("case2: " + rep.message);
  }
  if (cfg_.py == OutputConstraint::CurlFree) {
    if (cfg_.curl.coords.empty())
      throw Error("case2: curl-free output needs coordinate indices");
    if (static_cast<int>(cfg_.curl.coords.size()) != cfg_.ny)
      throw Error("case2: curl-free output dim must equal coordinate count");
    if (!cfg_.norm.y.identity())
      throw Error("case2: curl-free output requires identity y normalization");
  }
  const int dy_out = cfg_.py == OutputConstraint::CurlFree ? 1 : cfg_.ny;
  subnets_.push_back(nn::mlp_spec("encoder", cfg_.enc_in(), cfg_.enc_hidden, cfg_.npsi, cfg_.act));
  subnets_.push_back(
      nn::mlp_spec("transition", cfg_.npsi, cfg_.trans_hidden, cfg_.npsi, cfg_.act));
  subnets_.push_back(nn::mlp_spec("decoder_x", cfg_.npsi, cfg_.decx_hidden, cfg_.nx, cfg_.act));
  subnets_.push_back(nn::mlp_spec("decoder_y", cfg_.npsi, cfg_.decy_hidden, dy_out, cfg_.act));
  if (cfg_.px == StateConstraint::Conic) {
    const int r = cfg_.conic->ray_count();
    subnets_.push_back({"conic", {{cfg_.nx, r, nn::Activation::Identity}}});
  }
  if (cfg_.py == OutputConstraint::CurlFree) phys::require_smooth_path(subnets_);
}

namespace {

Var encode_case2(Tape& t, const TapedWeights& tw, const Case2Config& cfg, Var x, Var u) {
  Var xn = apply_norm(t, cfg.norm.x, x);
  Var in = xn;
  if (cfg.nu > 0) {
    Var un = apply_norm(t, cfg.norm.u, u);
    in = vcat2(t, xn, un);
  }
  return nn::mlp_forward(t, tw, "encoder", in);
}

}  // namespace

Var Case2Model::decode_state(Tape& t, const TapedWeights& tw, Var psi) const {
  Var xt = nn::mlp_forward(t, tw, "decoder_x", psi);
  if (cfg_.px == StateConstraint::Conic)
    return phys::conic_apply(t, *cfg_.conic, tw, xt);  // physical by construction
  return apply_denorm(t, cfg_.norm.x, xt);
}

Var Case2Model::decode_output(Tape& t, const TapedWeights& tw, Var psi, Var x_leaf) const {
  Var yt = nn::mlp_forward(t, tw, "decoder_y", psi);
  if (cfg_.py == OutputConstraint::CurlFree) {
    const Array& xv = t.value(x_leaf);
    if (xv.rank() == 2) return phys::potential_gradient_cols(t, yt, x_leaf, cfg_.curl.coords);
    Var phi = t.reshape(yt, {});
    return phys::potential_gradient(t, phi, x_leaf, cfg_.curl.coords);
  }
  return apply_denorm(t, cfg_.norm.y, yt);
}

Case2Step Case2Model::step(Tape& t, const TapedWeights& tw, Var x, Var u) const {
  Var psi = encode_case2(t, tw, cfg_, x, u);
  Var psi1 = nn::mlp_forward(t, tw, "transition", psi);
  return {decode_state(t, tw, psi1), decode_output(t, tw, psi1, x)};
}

Var Case2Model::predict_state(Tape& t, const TapedWeights& tw, Var x, Var u) const {
  Var psi1 = nn::mlp_forward(t, tw, "transition", encode_case2(t, tw, cfg_, x, u));
  return decode_state(t, tw, psi1);
}

Var Case2Model::measure(Tape& t, const TapedWeights& tw, Var x, Var u) const {
  Var psi = encode_case2(t, tw, cfg_, x, u);
  return decode_output(t, tw, psi, x);
}

Var Case2Model::reconstruct(Tape& t, const TapedWeights& tw, Var x, Var u) const {
  Var psi = encode_case2(t, tw, cfg_, x, u);
  return decode_state(t, tw, psi);
}

LossParts Case2Model::loss(Tape& t, const TapedWeights& tw, const Trajectory& tr,
                           std::span<const int> starts) const {
  if (starts.empty()) throw Error("case2 loss: empty batch");
  for (int s : starts)
    if (s < 0 || static_cast<std::size_t>(s + cfg_.NS) >= tr.len)
      throw Error("case2 loss: start " + std::to_string(s) + " out of bounds");
  const int N = static_cast<int>(starts.size());
  Var X0 = t.input(rows_matrix(tr.x, cfg_.nx, starts, 0));  // leaf: curl-free needs d/dx
  Var U0 = cfg_.nu > 0 ? t.constant(rows_matrix(tr.u, cfg_.nu, starts, 0)) : Var{};
  Var psi = encode_case2(t, tw, cfg_, X0, U0);

  const bool conic = cfg_.px == StateConstraint::Conic;
  auto x_target = [&](int k) {
    Var phys = t.constant(rows_matrix(tr.x, cfg_.nx, starts, k));
    return conic ? phys : apply_norm(t, cfg_.norm.x, phys);
  };
  auto x_pred = [&](Var p) {
    Var xt = nn::mlp_forward(t, tw, "decoder_x", p);
    return conic ? phys::conic_apply(t, *cfg_.conic, tw, xt) : xt;  // normalized unless conic
  };

  Var recon = mse(t, x_pred(psi), x_target(0));

  Var acc_x = t.constant(0.0);
  Var acc_y = t.constant(0.0);
  for (int k = 1; k <= cfg_.NS; ++k) {
    psi = nn::mlp_forward(t, tw, "transition", psi);
    Var dx = t.sub(x_pred(psi), x_target(k));
    acc_x = t.add(acc_x, t.sum(t.mul(dx, dx)));
    Var yhat;
    if (cfg_.py == OutputConstraint::CurlFree) {
      Var phi_cols = nn::mlp_forward(t, tw, "decoder_y", psi);
      yhat = phys::potential_gradient_cols(t, phi_cols, X0, cfg_.curl.coords);
    } else {
      yhat = nn::mlp_forward(t, tw, "decoder_y", psi);
    }
    Var ytgt = t.constant(rows_matrix(tr.y, cfg_.ny, starts, k));
    if (cfg_.py != OutputConstraint::CurlFree) ytgt = apply_norm(t, cfg_.norm.y, ytgt);
    Var dy = t.sub(yhat, ytgt);
    acc_y = t.add(acc_y, t.sum(t.mul(dy, dy)));
  }
  const double dn_x = static_cast<double>(N) * cfg_.NS * cfg_.nx;
  const double dn_y = static_cast<double>(N) * cfg_.NS * cfg_.ny;
  LossParts parts;
  parts.recon = recon;
  parts.pred_x = t.scale(acc_x, 1.0 / dn_x);
  parts.pred_y = t.scale(acc_y, 1.0 / dn_y);
  parts.total = t.add(t.add(parts.recon, parts.pred_x), parts.pred_y);
  return parts;
}

Array curlfree_eval(const Case2Model& model, const WeightSet& ws, const Array& x,
                    const Array& u) {
  if (model.config().py != OutputConstraint::CurlFree)
    throw Error("curlfree_eval: model output path is not curl-free");
  phys::require_smooth_path(ws, "encoder");
  phys::require_smooth_path(ws, "decoder_y");
  Tape t;
  TapedWeights tw = bind(t, ws);
  Var xv = t.input(x);
  Var uv = model.config().nu > 0 ? t.input(u) : Var{};
  Var field = model.measure(t, tw, xv, uv);
  return t.value(field);
}

}  // namespace metassm::nssm
