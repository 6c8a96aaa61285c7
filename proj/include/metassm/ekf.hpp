#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metassm/nssm.hpp"

namespace metassm::ekf {

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct NoiseModel {
  Eigen::MatrixXd Qw;    // process covariance
  Eigen::MatrixXd Qeta;  // measurement covariance
};

// Prediction/measurement model pair the filter linearizes.
class Model {
 public:
  virtual ~Model() = default;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual Eigen::VectorXd f(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
  virtual Eigen::VectorXd h(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
  // (F, H) = (df/dx, dh/dx) evaluated at x
  virtual std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jacobians(
      const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
  virtual bool can_project() const { return false; }
  virtual Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    (void)u;
    return x;
  }
};

// Case II NSSM as the filter model: f through the constrained state path,
// h through the (possibly curl-free) output path, Jacobians by autodiff.
class NssmEkfModel : public Model {
 public:
  NssmEkfModel(const nssm::Case2Model& model, nn::WeightSet weights);

  int state_dim() const override { return model_->config().nx; }
  int input_dim() const override { return model_->config().nu; }
  int output_dim() const override { return model_->config().ny; }
  Eigen::VectorXd f(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  Eigen::VectorXd h(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jacobians(
      const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  bool can_project() const override {
    return model_->config().px == nssm::StateConstraint::Conic;
  }
  Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;

 private:
  const nssm::Case2Model* model_;
  nn::WeightSet ws_;
};

GaussianBelief time_update(const GaussianBelief& posterior, const Eigen::VectorXd& u,
                           const Model& model, const NoiseModel& noise);

GaussianBelief measurement_update(const GaussianBelief& prior, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& u, const Model& model,
                                  const NoiseModel& noise,
                                  double* innovation_norm = nullptr);

// Replaces the mean by the autoencoder reconstruction (feasible under the
// model's state constraint); covariance unchanged.
GaussianBelief project_estimate(const GaussianBelief& posterior, const Eigen::VectorXd& u,
                                const Model& model);

struct FilterStep {
  double t = 0.0;
  Eigen::VectorXd prior_mean, post_mean;
  Eigen::VectorXd sigma3;  // 3 sqrt(diag(P+))
  double innovation_norm = 0.0;
};

struct FilterResult {
  std::vector<FilterStep> steps;
  // cumulative sum over steps of |x_true - x_post|, when truth is supplied
  double cumulative_error = 0.0;
};

// Sequential filter over an input/measurement stream. The initial belief is
// the prior at step 0; each step assimilates y_t then predicts ahead with
// u_t. Optional constraint projection runs after every measurement update.
FilterResult run_filter(const Model& model, const NoiseModel& noise,
                        const GaussianBelief& init, const std::vector<Eigen::VectorXd>& us,
                        const std::vector<Eigen::VectorXd>& ys, bool project, double dt = 1.0,
                        const std::vector<Eigen::VectorXd>* truth = nullptr);

// time, true state (when available), mean, diagonal 3-sigma, innovation norm
void write_filter_csv(const FilterResult& r, const std::vector<Eigen::VectorXd>* truth,
                      const std::string& path);

}  // namespace metassm::ekf
