#pragma once
// Multi-step prediction on the lifted coordinates and the cumulative relative error.

#include "pk/dataset.hpp"
#include "pk/dictionary.hpp"
#include "pk/koopman.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace pk::eval {

struct LiftedModel {
  dict::Dictionary dict;
  koop::OperatorModel op;
};

/// One lifted model, or a family of them keyed by the parameter each was
/// trained on. A family picks the member nearest (Euclidean) to the mean
/// parameter of the trajectory being predicted.
struct Predictor {
  std::string name;
  std::vector<LiftedModel> members;
  std::vector<Eigen::VectorXd> keys;

  static Predictor single(std::string name, dict::Dictionary dict, koop::OperatorModel op);
  const LiftedModel& select(const Eigen::MatrixXd& params) const;
  void validate() const;
};

/// Predicted observables y_1..y_N (n_obs x N) from x0 under params (n_u x N).
/// With `resubstitute` the predicted state is lifted again after every step,
/// which needs the identity observable map. Throws NumericalError naming the
/// step when the lift becomes non-finite.
Eigen::MatrixXd rollout(const dict::Dictionary& dict, const koop::OperatorModel& op,
                        const Eigen::Ref<const Eigen::VectorXd>& x0, const Eigen::MatrixXd& params, bool resubstitute);

/// E(t_n) = sqrt(sum_{i<=n} |yhat_i - y_i|^2) / sqrt(sum_{i<=n} |y_i|^2) for n = 1..N.
/// Throws NumericalError when a denominator is zero.
Eigen::VectorXd relative_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& prediction);

struct ModelErrors {
  std::string name;
  /// trajectories x N
  Eigen::MatrixXd per_trajectory;
  Eigen::VectorXd mean;
  /// Sample standard deviation across trajectories (zero for one trajectory).
  Eigen::VectorXd stddev;

  double final_mean() const { return mean.size() ? mean(mean.size() - 1) : 0.0; }
};

struct SuiteResult {
  double dt = 0.0;
  std::vector<ModelErrors> rows;
};

/// Rolls out every predictor on every test trajectory and collects the error curves.
SuiteResult evaluate_suite(const std::vector<Predictor>& predictors, const TrajectoryDataset& test, bool resubstitute,
                           std::size_t threads = 0);

/// model,trajectory,n,t,E
void write_error_csv(const SuiteResult& result, std::ostream& out);
/// model,n,t,mean,stddev
void write_summary_csv(const SuiteResult& result, std::ostream& out);
/// trajectory,n,t,y_1..,yhat_1..
void write_prediction_csv(const Predictor& predictor, const TrajectoryDataset& test, bool resubstitute,
                          std::ostream& out);

}  // namespace pk::eval
