#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metassm/common.hpp"

namespace metassm::metrics {

// sqrt(mean squared error), flattened over channels and time
double rmse(std::span<const double> y_true, std::span<const double> y_pred);

// 100 (1 - |y - yhat| / |y - ybar|), ybar the per-channel mean of y_true.
// nch > 1 computes the norms over the flattened residuals. Errors when
// y_true is constant (undefined metric).
double fit_percent(std::span<const double> y_true, std::span<const double> y_pred,
                   int nch = 1);
std::vector<double> fit_percent_per_channel(std::span<const double> y_true,
                                            std::span<const double> y_pred, int nch);

struct SourceTargetSplit {
  std::vector<std::size_t> src_train, src_val, src_test, target;
};

// Disjoint, exhaustive, seeded partition of n trajectories: source_fraction
// goes to the source side, split train/test/val by tvt; the remainder is the
// target set.
SourceTargetSplit split_source_target(std::size_t n, double source_fraction,
                                      std::array<double, 3> tvt, uint64_t seed);

struct EvalReport {
  double rmse = 0.0;
  double fit = 0.0;
  std::vector<double> fit_per_channel;
  std::vector<double> per_step_error;  // |y_t - yhat_t| over the evaluated span
  std::string model_id, dataset_id;
  uint64_t seed = 0;
  double adapt_fraction = 0.0;
  std::string algorithm;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

void write_eval_report(const EvalReport& r, const std::string& path);
EvalReport read_eval_report(const std::string& path);
void write_error_series(std::span<const double> errors, double dt, const std::string& path);

double median(std::vector<double> v);

}  // namespace metassm::metrics
