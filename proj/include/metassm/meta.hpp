#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metassm/layers.hpp"
#include "metassm/trajectory.hpp"

namespace metassm::meta {

using ad::Tape;
using ad::Var;
using nn::TapedWeights;
using nn::WeightSet;

enum class Algorithm { Maml, FoMaml, Anil, Reptile };
Algorithm parse_algorithm(std::string_view name);
std::string_view algorithm_name(Algorithm a);

struct MetaConfig {
  Algorithm algorithm = Algorithm::Maml;
  double beta_in = 0.01;
  double beta_out = 0.001;
  int M = 1;   // inner iterations
  int B = 4;   // tasks per outer batch
  // Inner-loop layer selection. maml/fomaml always update every layer;
  // anil uses this mask (a full mask makes anil coincide with maml).
  nn::Mask inner_mask = nn::Mask::all();
  int epochs = 100;
  double val_fraction = 0.2;
  uint64_t seed = 0;
  bool adam_outer = false;  // plain Eq-style step is the reference path
  double clip_norm = 10.0;
  int context_size = 0;  // context block length in points
  int target_size = 0;   // target block length; 0 = same as context
  int max_windows = 0;   // cap windows per set (evenly strided); 0 = all
  int jobs = 0;          // worker cap for the task batch; 0 = global

  const nn::Mask& effective_mask() const;
};

// Context/target partition of one trajectory, as window start indices.
struct TaskSplit {
  int system = -1;
  std::vector<int> context;
  std::vector<int> target;
};

enum class PartitionMode { Train, Inference };

// Train mode: independently placed consecutive context/target blocks
// (target may precede or overlap context). Inference mode: context is the
// trajectory prefix of context_size points, target the suffix. Windows are
// every valid start inside a block for a window spanning H + Hp rows.
TaskSplit partition(const Trajectory& tr, PartitionMode mode, int H, int Hp,
                    int context_size, uint64_t seed, int target_size = 0,
                    int max_windows = 0);

// Builds the scalar training loss on the tape for a set of window starts.
using LossBuilder =
    std::function<Var(Tape&, const TapedWeights&, std::span<const int>)>;

struct Task {
  LossBuilder loss;
  TaskSplit split;
};

// Binds trajectories to loss builders and carries the window geometry the
// partitioner needs.
struct TaskFamily {
  std::function<LossBuilder(const Trajectory&)> bind;
  int H = 1;
  int Hp = 1;
};

// --- adaptation ---------------------------------------------------------------

// M masked gradient steps on the context loss; detached (each step on a
// fresh tape). M = 0 returns w unchanged.
WeightSet inner_adapt(const WeightSet& w, const Task& task, const MetaConfig& cfg);

// Same updates built on one tape so the result stays differentiable with
// respect to the initial weights (second-order MAML/ANIL).
TapedWeights inner_adapt_taped(Tape& t, const TapedWeights& w0, const Task& task,
                               const MetaConfig& cfg);

// Algorithm S2: masked inner steps on the target-system context; no outer
// update.
WeightSet meta_infer(const WeightSet& trained, const Task& context_task,
                     const MetaConfig& cfg);

// --- outer loop ----------------------------------------------------------------

struct TaskGradient {
  WeightSet grad;     // outer gradient (reptile: w - w_adapted)
  double target_loss = 0.0;
};

TaskGradient outer_task_gradient(const WeightSet& w, const Task& task,
                                 const MetaConfig& cfg);

struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct OuterResult {
  WeightSet weights;
  double mean_target_loss = 0.0;
};

// One outer update over a batch of tasks. Task gradients are computed in
// parallel into per-task slots and reduced in task order, so results are
// identical for any worker count.
OuterResult outer_step(const WeightSet& w, std::span<const Task> batch,
                       const MetaConfig& cfg, AdamState* adam = nullptr);

// --- training loops -------------------------------------------------------------

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_s = 0.0;
  bool checkpointed = false;
};

struct TrainResult {
  WeightSet best;
  WeightSet last;
  std::vector<TrainLogRow> log;
  double best_val = 0.0;
};

// Algorithm S1 over source trajectories: epochs x task batches, with a
// seeded train/validation split by system and checkpointing on improved
// validation loss.
TrainResult meta_train(const WeightSet& init, const TaskFamily& family,
                       std::span<const Trajectory> sources, const MetaConfig& cfg);

void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path);

// --- supervised baselines --------------------------------------------------------

// Window pool for single-loop training (universal / transfer / target-only
// baselines).
struct Pool {
  const Trajectory* traj = nullptr;
  LossBuilder loss;
  std::vector<int> starts;
};

std::vector<int> all_window_starts(const Trajectory& tr, int span, int max_windows = 0);

struct SupervisedConfig {
  int steps = 100;
  double lr = 1e-2;
  int batch = 16;  // windows per step
  bool adam = true;
  double clip_norm = 10.0;
  uint64_t seed = 0;
};

WeightSet supervised_train(const WeightSet& init, std::span<const Pool> pools,
                           const SupervisedConfig& cfg);

}  // namespace metassm::meta
