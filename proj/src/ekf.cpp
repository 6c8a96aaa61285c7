#include "metassm/ekf.hpp"

#include <cmath>
#include <fstream>

namespace metassm::ekf {

namespace {

using ad::Array;
using ad::Tape;
using ad::Var;

Array to_array(const Eigen::VectorXd& v) {
  std::vector<double> d(v.data(), v.data() + v.size());
  return Array::vec(std::move(d));
}

Eigen::VectorXd to_eigen(const Array& a) {
  Eigen::VectorXd v(static_cast<long>(a.size()));
  for (long i = 0; i < v.size(); ++i) v[i] = a[static_cast<std::size_t>(i)];
  return v;
}

Eigen::MatrixXd to_eigen_mat(const Array& a) {
  Eigen::MatrixXd m(a.shape()[0], a.shape()[1]);
  for (int i = 0; i < a.shape()[0]; ++i)
    for (int j = 0; j < a.shape()[1]; ++j) m(i, j) = a.at(i, j);
  return m;
}

void symmetrize(Eigen::MatrixXd& P, const char* where) {
  const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if (asym > 1e-9 * scale)
    throw NumericalError(std::string("ekf: covariance asymmetry ") + std::to_string(asym) +
                         " in " + where);
  P = 0.5 * (P + P.transpose());
}

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string("ekf: non-finite ") + what);
}

}  // namespace

NssmEkfModel::NssmEkfModel(const nssm::Case2Model& model, nn::WeightSet weights)
    : model_(&model), ws_(std::move(weights)) {}

Eigen::VectorXd NssmEkfModel::f(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Tape t;
  auto tw = nn::bind(t, ws_);
  Var xv = t.input(to_array(x));
  Var uv = model_->config().nu > 0 ? t.input(to_array(u)) : Var{};
  return to_eigen(t.value(model_->predict_state(t, tw, xv, uv)));
}

Eigen::VectorXd NssmEkfModel::h(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Tape t;
  auto tw = nn::bind(t, ws_);
  Var xv = t.input(to_array(x));
  Var uv = model_->config().nu > 0 ? t.input(to_array(u)) : Var{};
  return to_eigen(t.value(model_->measure(t, tw, xv, uv)));
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> NssmEkfModel::jacobians(
    const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Tape t;
  auto tw = nn::bind(t, ws_);
  Var xv = t.input(to_array(x));
  Var uv = model_->config().nu > 0 ? t.input(to_array(u)) : Var{};
  Var fx = model_->predict_state(t, tw, xv, uv);
  Var hx = model_->measure(t, tw, xv, uv);
  Eigen::MatrixXd F = to_eigen_mat(ad::jacobian(t, fx, xv));
  Eigen::MatrixXd H = to_eigen_mat(ad::jacobian(t, hx, xv));
  return {F, H};
}

Eigen::VectorXd NssmEkfModel::project(const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& u) const {
  Tape t;
  auto tw = nn::bind(t, ws_);
  Var xv = t.input(to_array(x));
  Var uv = model_->config().nu > 0 ? t.input(to_array(u)) : Var{};
  return to_eigen(t.value(model_->reconstruct(t, tw, xv, uv)));
}

GaussianBelief time_update(const GaussianBelief& posterior, const Eigen::VectorXd& u,
                           const Model& model, const NoiseModel& noise) {
  check_finite(posterior.mean, "posterior mean");
  auto [F, H] = model.jacobians(posterior.mean, u);
  (void)H;
  GaussianBelief prior;
  prior.mean = model.f(posterior.mean, u);
  check_finite(prior.mean, "predicted state");
  prior.cov = F * posterior.cov * F.transpose() + noise.Qw;
  symmetrize(prior.cov, "time update");
  return prior;
}

GaussianBelief measurement_update(const GaussianBelief& prior, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& u, const Model& model,
                                  const NoiseModel& noise, double* innovation_norm) {
  auto [F, H] = model.jacobians(prior.mean, u);
  (void)F;
  const Eigen::MatrixXd S = H * prior.cov * H.transpose() + noise.Qeta;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (emin <= 0.0 || emax / emin > 1e14)
    throw NumericalError(
        "ekf: singular innovation covariance, condition number " +
        (emin > 0.0 ? std::to_string(emax / emin) : std::string("inf")));
  // symmetric solve instead of an explicit inverse
  const Eigen::MatrixXd K = S.ldlt().solve(H * prior.cov).transpose();
  GaussianBelief post;
  const Eigen::VectorXd innovation = y - model.h(prior.mean, u);
  if (innovation_norm) *innovation_norm = innovation.norm();
  post.mean = prior.mean + K * innovation;
  check_finite(post.mean, "posterior mean");
  const auto n = prior.mean.size();
  post.cov = (Eigen::MatrixXd::Identity(n, n) - K * H) * prior.cov;
  symmetrize(post.cov, "measurement update");
  return post;
}

GaussianBelief project_estimate(const GaussianBelief& posterior, const Eigen::VectorXd& u,
                                const Model& model) {
  GaussianBelief out = posterior;
  out.mean = model.project(posterior.mean, u);
  return out;
}

FilterResult run_filter(const Model& model, const NoiseModel& noise,
                        const GaussianBelief& init, const std::vector<Eigen::VectorXd>& us,
                        const std::vector<Eigen::VectorXd>& ys, bool project, double dt,
                        const std::vector<Eigen::VectorXd>* truth) {
  if (ys.empty()) throw Error("run_filter: empty measurement stream");
  if (us.size() != ys.size()) throw Error("run_filter: input/measurement length mismatch");
  FilterResult res;
  GaussianBelief prior = init;
  for (std::size_t t = 0; t < ys.size(); ++t) {
    FilterStep step;
    step.t = static_cast<double>(t) * dt;
    step.prior_mean = prior.mean;
    GaussianBelief post =
        measurement_update(prior, ys[t], us[t], model, noise, &step.innovation_norm);
    if (project && model.can_project()) post = project_estimate(post, us[t], model);
    step.post_mean = post.mean;
    step.sigma3 = (3.0 * post.cov.diagonal().cwiseMax(0.0).cwiseSqrt());
    res.steps.push_back(step);
    if (truth) res.cumulative_error += ((*truth)[t] - post.mean).norm();
    if (t + 1 < ys.size()) prior = time_update(post, us[t], model, noise);
  }
  return res;
}

void write_filter_csv(const FilterResult& r, const std::vector<Eigen::VectorXd>* truth,
                      const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path);
  if (r.steps.empty()) return;
  const auto n = r.steps[0].post_mean.size();
  f << "t";
  if (truth)
    for (long i = 0; i < n; ++i) f << ",x_true" << i;
  for (long i = 0; i < n; ++i) f << ",x_hat" << i;
  for (long i = 0; i < n; ++i) f << ",sigma3_" << i;
  f << ",innovation_norm\n";
  for (std::size_t t = 0; t < r.steps.size(); ++t) {
    const auto& s = r.steps[t];
    f << s.t;
    if (truth)
      for (long i = 0; i < n; ++i) f << "," << (*truth)[t][i];
    for (long i = 0; i < n; ++i) f << "," << s.post_mean[i];
    for (long i = 0; i < n; ++i) f << "," << s.sigma3[i];
    f << "," << s.innovation_norm << "\n";
  }
}

}  // namespace metassm::ekf
