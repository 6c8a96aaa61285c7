#include "metassm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "metassm/rng.hpp"
#include <nlohmann/json.hpp>

namespace metassm::metrics {

using json = nlohmann::json;

double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.empty()) throw Error("rmse: empty input");
  if (y_true.size() != y_pred.size()) throw Error("rmse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double d = y_true[i] - y_pred[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(y_true.size()));
}

namespace {

double fit_for(std::span<const double> y_true, std::span<const double> y_pred,
               std::span<const double> mean, int nch) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double r = y_true[i] - y_pred[i];
    const double c = y_true[i] - mean[i % static_cast<std::size_t>(nch)];
    num += r * r;
    den += c * c;
  }
  if (den <= 0.0) throw Error("fit_percent: y_true is constant, metric undefined");
  return 100.0 * (1.0 - std::sqrt(num) / std::sqrt(den));
}

std::vector<double> channel_means(std::span<const double> y, int nch) {
  std::vector<double> m(static_cast<std::size_t>(nch), 0.0);
  const std::size_t rows = y.size() / static_cast<std::size_t>(nch);
  for (std::size_t i = 0; i < y.size(); ++i) m[i % static_cast<std::size_t>(nch)] += y[i];
  for (auto& v : m) v /= static_cast<double>(rows);
  return m;
}

}  // namespace

double fit_percent(std::span<const double> y_true, std::span<const double> y_pred, int nch) {
  if (y_true.empty()) throw Error("fit_percent: empty input");
  if (y_true.size() != y_pred.size()) throw Error("fit_percent: length mismatch");
  if (nch < 1 || y_true.size() % static_cast<std::size_t>(nch) != 0)
    throw Error("fit_percent: bad channel count");
  const auto means = channel_means(y_true, nch);
  return fit_for(y_true, y_pred, means, nch);
}

std::vector<double> fit_percent_per_channel(std::span<const double> y_true,
                                            std::span<const double> y_pred, int nch) {
  const auto means = channel_means(y_true, nch);
  const std::size_t rows = y_true.size() / static_cast<std::size_t>(nch);
  std::vector<double> out;
  for (int c = 0; c < nch; ++c) {
    std::vector<double> t(rows), p(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      t[r] = y_true[r * static_cast<std::size_t>(nch) + static_cast<std::size_t>(c)];
      p[r] = y_pred[r * static_cast<std::size_t>(nch) + static_cast<std::size_t>(c)];
    }
    const double m[1] = {means[static_cast<std::size_t>(c)]};
    out.push_back(fit_for(t, p, std::span<const double>(m, 1), 1));
  }
  return out;
}

SourceTargetSplit split_source_target(std::size_t n, double source_fraction,
                                      std::array<double, 3> tvt, uint64_t seed) {
  if (n < 2) throw Error("split_source_target: need at least 2 trajectories");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

  const auto n_src = static_cast<std::size_t>(
      std::round(source_fraction * static_cast<double>(n)));
  if (n_src == 0 || n_src > n)
    throw Error("split_source_target: source fraction leaves no source trajectories");
  const double tvt_sum = tvt[0] + tvt[1] + tvt[2];
  if (tvt_sum <= 0.0) throw Error("split_source_target: bad train/val/test fractions");
  auto n_train = static_cast<std::size_t>(
      std::round(tvt[0] / tvt_sum * static_cast<double>(n_src)));
  auto n_val = static_cast<std::size_t>(
      std::round(tvt[1] / tvt_sum * static_cast<double>(n_src)));
  if (n_train == 0) n_train = 1;
  if (n_train + n_val > n_src) n_val = n_src - n_train;

  SourceTargetSplit s;
  std::size_t i = 0;
  for (; i < n_train; ++i) s.src_train.push_back(order[i]);
  for (; i < n_train + n_val; ++i) s.src_val.push_back(order[i]);
  for (; i < n_src; ++i) s.src_test.push_back(order[i]);
  for (; i < n; ++i) s.target.push_back(order[i]);
  return s;
}

std::string EvalReport::to_json() const {
  json j;
  j["rmse"] = rmse;
  j["fit_percent"] = fit;
  j["fit_per_channel"] = fit_per_channel;
  j["per_step_error"] = per_step_error;
  j["model_id"] = model_id;
  j["dataset_id"] = dataset_id;
  j["seed"] = seed;
  j["adapt_fraction"] = adapt_fraction;
  j["algorithm"] = algorithm;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport r;
  r.rmse = j.at("rmse").get<double>();
  r.fit = j.at("fit_percent").get<double>();
  r.fit_per_channel = j.value("fit_per_channel", std::vector<double>{});
  r.per_step_error = j.value("per_step_error", std::vector<double>{});
  r.model_id = j.value("model_id", "");
  r.dataset_id = j.value("dataset_id", "");
  r.seed = j.value("seed", 0ull);
  r.adapt_fraction = j.value("adapt_fraction", 0.0);
  r.algorithm = j.value("algorithm", "");
  return r;
}

void write_eval_report(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path);
  f << r.to_json() << "\n";
}

EvalReport read_eval_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return EvalReport::from_json(text);
}

void write_error_series(std::span<const double> errors, double dt, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path);
  f << "t,abs_error\n";
  for (std::size_t i = 0; i < errors.size(); ++i)
    f << static_cast<double>(i) * dt << "," << errors[i] << "\n";
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace metassm::metrics
