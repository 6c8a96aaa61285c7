#include "metassm/meta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "metassm/parallel.hpp"
#include "metassm/rng.hpp"

namespace metassm::meta {

Algorithm parse_algorithm(std::string_view name) {
  if (name == "maml") return Algorithm::Maml;
  if (name == "fomaml") return Algorithm::FoMaml;
  if (name == "anil") return Algorithm::Anil;
  if (name == "reptile") return Algorithm::Reptile;
  throw Error("unknown meta algorithm '" + std::string(name) + "'");
}

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Maml: return "maml";
    case Algorithm::FoMaml: return "fomaml";
    case Algorithm::Anil: return "anil";
    case Algorithm::Reptile: return "reptile";
  }
  return "?";
}

namespace {
const nn::Mask kAll = nn::Mask::all();
}

const nn::Mask& MetaConfig::effective_mask() const {
  // only anil restricts the inner loop; maml/fomaml/reptile update all layers
  if (algorithm == Algorithm::Anil) return inner_mask;
  return kAll;
}

TaskSplit partition(const Trajectory& tr, PartitionMode mode, int H, int Hp,
                    int context_size, uint64_t seed, int target_size, int max_windows) {
  const int span = H + Hp;
  const auto len = static_cast<int>(tr.len);
  if (context_size < span)
    throw Error("partition: context of " + std::to_string(context_size) +
                " points cannot fit a window of " + std::to_string(span) + " rows");
  if (target_size <= 0) target_size = context_size;

  auto starts_in = [&](int begin, int size) {
    std::vector<int> s;
    for (int i = begin; i + span <= begin + size; ++i) s.push_back(i);
    if (max_windows > 0 && static_cast<int>(s.size()) > max_windows) {
      std::vector<int> sub;
      const double stride = static_cast<double>(s.size()) / max_windows;
      for (int k = 0; k < max_windows; ++k)
        sub.push_back(s[static_cast<std::size_t>(k * stride)]);
      return sub;
    }
    return s;
  };

  TaskSplit split;
  if (mode == PartitionMode::Inference) {
    if (context_size >= len)
      throw Error("partition: trajectory too short for context prefix of " +
                  std::to_string(context_size));
    if (len - context_size < span)
      throw Error("partition: trajectory too short for a target window after the context");
    split.context = starts_in(0, context_size);
    split.target = starts_in(context_size, len - context_size);
  } else {
    if (len < context_size || len < target_size)
      throw Error("partition: trajectory too short for requested blocks");
    Rng rng(seed);
    const int cpos = static_cast<int>(rng.uniform_index(
        static_cast<std::size_t>(len - context_size + 1)));
    const int tpos = static_cast<int>(rng.uniform_index(
        static_cast<std::size_t>(len - target_size + 1)));
    split.context = starts_in(cpos, context_size);
    split.target = starts_in(tpos, target_size);
  }
  if (split.context.empty() || split.target.empty())
    throw Error("partition: empty context or target window set");
  return split;
}

namespace {

struct MaskedIndex {
  std::vector<std::size_t> layer_of_var;  // gradient order bookkeeping
  std::vector<Var> vars;                  // W,b of each masked layer
};

MaskedIndex masked_vars(const TapedWeights& tw, const nn::Mask& mask) {
  MaskedIndex mi;
  for (std::size_t i = 0; i < tw.layers.size(); ++i) {
    if (!mask.matches(tw.layers[i].path)) continue;
    mi.layer_of_var.push_back(i);
    mi.vars.push_back(tw.layers[i].W);
    mi.vars.push_back(tw.layers[i].b);
  }
  return mi;
}

double loss_value(Tape& t, Var loss) {
  const double v = t.value(loss)[0];
  if (!std::isfinite(v))
    throw NumericalError("meta: non-finite loss (" + std::to_string(v) + ")");
  return v;
}

// one masked gradient step, appended to the same tape
TapedWeights taped_step(Tape& t, const TapedWeights& w, Var loss, const nn::Mask& mask,
                        double beta_in) {
  MaskedIndex mi = masked_vars(w, mask);
  (void)loss_value(t, loss);
  if (mi.vars.empty()) return w;
  auto grads = t.gradient(loss, mi.vars);
  TapedWeights out = w;
  for (std::size_t k = 0; k < mi.layer_of_var.size(); ++k) {
    auto& e = out.layers[mi.layer_of_var[k]];
    e.W = t.sub(e.W, t.scale(grads[2 * k], beta_in));
    e.b = t.sub(e.b, t.scale(grads[2 * k + 1], beta_in));
  }
  return out;
}

WeightSet grads_to_weightset(const TapedWeights& tw, const std::vector<Var>& grads) {
  WeightSet g;
  for (std::size_t i = 0; i < tw.layers.size(); ++i) {
    nn::Layer l;
    l.path = tw.layers[i].path;
    l.spec = tw.layers[i].spec;
    Tape* t = grads[2 * i].tape;
    l.W = t->value(grads[2 * i]);
    l.b = t->value(grads[2 * i + 1]);
    g.layers.push_back(std::move(l));
  }
  return g;
}

void check_finite(const WeightSet& g, const std::string& what) {
  for (const auto& l : g.layers) {
    for (std::size_t i = 0; i < l.W.size(); ++i)
      if (!std::isfinite(l.W[i]))
        throw NumericalError("meta: non-finite " + what + " at layer '" + l.path + "'");
    for (std::size_t i = 0; i < l.b.size(); ++i)
      if (!std::isfinite(l.b[i]))
        throw NumericalError("meta: non-finite " + what + " at layer '" + l.path + "'");
  }
}

}  // namespace

TapedWeights inner_adapt_taped(Tape& t, const TapedWeights& w0, const Task& task,
                               const MetaConfig& cfg) {
  if (task.split.context.empty()) throw Error("inner_adapt: empty context set");
  TapedWeights w = w0;
  for (int m = 0; m < cfg.M; ++m) {
    Var loss = task.loss(t, w, task.split.context);
    w = taped_step(t, w, loss, cfg.effective_mask(), cfg.beta_in);
  }
  return w;
}

WeightSet inner_adapt(const WeightSet& w, const Task& task, const MetaConfig& cfg) {
  if (task.split.context.empty()) throw Error("inner_adapt: empty context set");
  WeightSet cur = w;
  for (int m = 0; m < cfg.M; ++m) {
    Tape t;
    TapedWeights tw = bind(t, cur);
    Var loss = task.loss(t, tw, task.split.context);
    TapedWeights next = taped_step(t, tw, loss, cfg.effective_mask(), cfg.beta_in);
    cur = extract(next);
  }
  return cur;
}

WeightSet meta_infer(const WeightSet& trained, const Task& context_task,
                     const MetaConfig& cfg) {
  return inner_adapt(trained, context_task, cfg);
}

TaskGradient outer_task_gradient(const WeightSet& w, const Task& task,
                                 const MetaConfig& cfg) {
  TaskGradient out;
  try {
    switch (cfg.algorithm) {
      case Algorithm::Maml:
      case Algorithm::Anil: {
        // second order: the whole inner trajectory stays on one tape
        Tape t;
        TapedWeights w0 = bind(t, w);
        TapedWeights wM = inner_adapt_taped(t, w0, task, cfg);
        Var loss = task.loss(t, wM, task.split.target);
        out.target_loss = loss_value(t, loss);
        auto grads = t.gradient(loss, w0.flat_vars());
        out.grad = grads_to_weightset(w0, grads);
        break;
      }
      case Algorithm::FoMaml: {
        WeightSet adapted = inner_adapt(w, task, cfg);
        Tape t;
        TapedWeights twa = bind(t, adapted);
        Var loss = task.loss(t, twa, task.split.target);
        out.target_loss = loss_value(t, loss);
        auto grads = t.gradient(loss, twa.flat_vars());
        out.grad = grads_to_weightset(twa, grads);
        break;
      }
      case Algorithm::Reptile: {
        WeightSet adapted = inner_adapt(w, task, cfg);
        out.grad = axpy(w, -1.0, adapted);  // w - w_M, an interpolation pseudo-gradient
        Tape t;
        TapedWeights twa = bind(t, adapted);
        out.target_loss = loss_value(t, task.loss(t, twa, task.split.target));
        break;
      }
    }
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " [task system " +
                         std::to_string(task.split.system) + "]");
  }
  check_finite(out.grad, "outer gradient");
  return out;
}

namespace {

WeightSet adam_update(const WeightSet& w, const WeightSet& g, double lr, AdamState& st) {
  if (st.m.empty()) {
    st.m.assign(w.param_count(), 0.0);
    st.v.assign(w.param_count(), 0.0);
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  WeightSet out = w;
  std::size_t k = 0;
  auto upd = [&](double& wv, double gv) {
    st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * gv;
    st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * gv * gv;
    const double mh = st.m[k] / bc1;
    const double vh = st.v[k] / bc2;
    wv -= lr * mh / (std::sqrt(vh) + st.eps);
    ++k;
  };
  for (std::size_t li = 0; li < out.layers.size(); ++li) {
    auto& l = out.layers[li];
    const auto& gl = g.layers[li];
    for (std::size_t i = 0; i < l.W.size(); ++i) upd(l.W[i], gl.W[i]);
    for (std::size_t i = 0; i < l.b.size(); ++i) upd(l.b[i], gl.b[i]);
  }
  return out;
}

}  // namespace

OuterResult outer_step(const WeightSet& w, std::span<const Task> batch,
                       const MetaConfig& cfg, AdamState* adam) {
  if (batch.empty()) throw Error("outer_step: empty task batch");
  std::vector<TaskGradient> slots(batch.size());
  parallel_for(
      batch.size(),
      [&](std::size_t i) { slots[i] = outer_task_gradient(w, batch[i], cfg); },
      cfg.jobs);

  // fixed task-index reduction order
  WeightSet total = slots[0].grad;
  double loss_sum = slots[0].target_loss;
  for (std::size_t i = 1; i < slots.size(); ++i) {
    total = axpy(total, 1.0, slots[i].grad);
    loss_sum += slots[i].target_loss;
  }

  OuterResult res;
  res.mean_target_loss = loss_sum / static_cast<double>(batch.size());
  if (cfg.algorithm == Algorithm::Reptile) {
    // mean over tasks, then interpolate toward the adapted weights
    WeightSet mean = total;
    for (auto& l : mean.layers) {
      for (std::size_t i = 0; i < l.W.size(); ++i) l.W[i] /= static_cast<double>(batch.size());
      for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] /= static_cast<double>(batch.size());
    }
    mean = clip_global_norm(mean, cfg.clip_norm);
    res.weights = axpy(w, -cfg.beta_out, mean);
  } else {
    total = clip_global_norm(total, cfg.clip_norm);
    res.weights = adam && cfg.adam_outer ? adam_update(w, total, cfg.beta_out, *adam)
                                         : axpy(w, -cfg.beta_out, total);
  }
  return res;
}

TrainResult meta_train(const WeightSet& init, const TaskFamily& family,
                       std::span<const Trajectory> sources, const MetaConfig& cfg) {
  if (sources.size() < static_cast<std::size_t>(std::max(cfg.B, 1)))
    throw Error("meta_train: need at least B source trajectories");
  // seeded split by system: head of the shuffle trains, tail validates
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(Rng::derive(cfg.seed, 0xA11CE));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
  std::size_t n_val = static_cast<std::size_t>(
      std::round(cfg.val_fraction * static_cast<double>(sources.size())));
  if (cfg.val_fraction > 0.0 && n_val == 0) n_val = 1;
  if (n_val >= sources.size()) n_val = sources.size() - 1;
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<long>(n_val));
  std::vector<std::size_t> val_idx(order.end() - static_cast<long>(n_val), order.end());

  auto make_task = [&](std::size_t sys, PartitionMode mode, uint64_t seed) {
    Task task;
    task.loss = family.bind(sources[sys]);
    task.split = partition(sources[sys], mode, family.H, family.Hp, cfg.context_size,
                           seed, cfg.target_size, cfg.max_windows);
    task.split.system = static_cast<int>(sys);
    return task;
  };

  auto validation_loss = [&](const WeightSet& w) {
    if (val_idx.empty()) return 0.0;
    std::vector<double> losses(val_idx.size());
    parallel_for(
        val_idx.size(),
        [&](std::size_t i) {
          Task task = make_task(val_idx[i], PartitionMode::Inference,
                                Rng::derive(cfg.seed, 0xBEEF + val_idx[i]));
          WeightSet adapted = meta_infer(w, task, cfg);
          Tape t;
          TapedWeights tw = bind(t, adapted);
          losses[i] = t.value(task.loss(t, tw, task.split.target))[0];
        },
        cfg.jobs);
    double s = 0.0;
    for (double v : losses) s += v;
    return s / static_cast<double>(losses.size());
  };

  TrainResult res;
  res.last = init;
  res.best = init;
  res.best_val = validation_loss(init);
  AdamState adam;
  Rng batch_rng(Rng::derive(cfg.seed, 0xBA7C4));
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<Task> batch;
    batch.reserve(static_cast<std::size_t>(cfg.B));
    for (int b = 0; b < cfg.B; ++b) {
      const std::size_t sys = train_idx[batch_rng.uniform_index(train_idx.size())];
      batch.push_back(make_task(sys, PartitionMode::Train,
                                Rng::derive(cfg.seed, 0x7A5C000ull +
                                                          static_cast<uint64_t>(epoch) * 1000 +
                                                          static_cast<uint64_t>(b))));
    }
    OuterResult step = outer_step(res.last, batch, cfg, cfg.adam_outer ? &adam : nullptr);
    res.last = std::move(step.weights);

    TrainLogRow row;
    row.epoch = epoch;
    row.train_loss = step.mean_target_loss;
    row.val_loss = validation_loss(res.last);
    row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (row.val_loss < res.best_val) {
      res.best_val = row.val_loss;
      res.best = res.last;
      row.checkpointed = true;
    }
    res.log.push_back(row);
  }
  if (cfg.epochs == 0) res.best = init;
  return res;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open training log " + path);
  f << "epoch,train_loss,val_loss,wall_s,checkpointed\n";
  for (const auto& r : log)
    f << r.epoch << "," << r.train_loss << "," << r.val_loss << "," << r.wall_s << ","
      << (r.checkpointed ? 1 : 0) << "\n";
}

std::vector<int> all_window_starts(const Trajectory& tr, int span, int max_windows) {
  std::vector<int> s;
  for (int i = 0; i + span <= static_cast<int>(tr.len); ++i) s.push_back(i);
  if (max_windows > 0 && static_cast<int>(s.size()) > max_windows) {
    std::vector<int> sub;
    const double stride = static_cast<double>(s.size()) / max_windows;
    for (int k = 0; k < max_windows; ++k) sub.push_back(s[static_cast<std::size_t>(k * stride)]);
    return sub;
  }
  return s;
}

WeightSet supervised_train(const WeightSet& init, std::span<const Pool> pools,
                           const SupervisedConfig& cfg) {
  if (pools.empty()) throw Error("supervised_train: no data pools");
  for (const auto& p : pools)
    if (p.starts.empty()) throw Error("supervised_train: empty window pool");
  WeightSet w = init;
  AdamState adam;
  Rng rng(cfg.seed);
  for (int step = 0; step < cfg.steps; ++step) {
    const Pool& pool = pools[rng.uniform_index(pools.size())];
    std::vector<int> starts;
    const int nb = std::min<int>(cfg.batch, static_cast<int>(pool.starts.size()));
    for (int i = 0; i < nb; ++i)
      starts.push_back(pool.starts[rng.uniform_index(pool.starts.size())]);
    Tape t;
    TapedWeights tw = bind(t, w);
    Var loss = pool.loss(t, tw, starts);
    (void)loss_value(t, loss);
    auto grads = t.gradient(loss, tw.flat_vars());
    WeightSet g = clip_global_norm(grads_to_weightset(tw, grads), cfg.clip_norm);
    check_finite(g, "supervised gradient");
    w = cfg.adam ? adam_update(w, g, cfg.lr, adam) : axpy(w, -cfg.lr, g);
  }
  return w;
}

}  // namespace metassm::meta
