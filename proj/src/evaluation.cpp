#include "pk/evaluation.hpp"

#include "pk/error.hpp"
#include "pk/parallel.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace pk::eval {

Predictor Predictor::single(std::string name, dict::Dictionary dict, koop::OperatorModel op) {
  Predictor p;
  p.name = std::move(name);
  p.members.push_back({std::move(dict), std::move(op)});
  return p;
}

void Predictor::validate() const {
  if (members.empty()) throw ConfigError("predictor '" + name + "' has no models");
  if (members.size() > 1 && keys.size() != members.size()) {
    throw ConfigError("predictor '" + name + "': one parameter key per member is required");
  }
  for (const auto& m : members) {
    require_dims(m.op.dim() == m.dict.n_psi(), "predictor '" + name + "': operator and dictionary dimensions differ");
  }
}

const LiftedModel& Predictor::select(const Eigen::MatrixXd& params) const {
  if (members.size() == 1) return members.front();
  const Eigen::VectorXd target =
      params.cols() > 0 ? Eigen::VectorXd(params.rowwise().mean()) : Eigen::VectorXd::Zero(keys.front().size());
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    require_dims(keys[i].size() == target.size(), "predictor: parameter key dimension mismatch");
    const double d = (keys[i] - target).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return members[best];
}

Eigen::MatrixXd rollout(const dict::Dictionary& dict, const koop::OperatorModel& op,
                        const Eigen::Ref<const Eigen::VectorXd>& x0, const Eigen::MatrixXd& params, bool resubstitute) {
  require_dims(op.dim() == dict.n_psi(), "rollout: operator and dictionary dimensions differ");
  require_dims(params.rows() == op.n_u(), "rollout: parameter dimension mismatch");
  if (resubstitute && dict.observable() != dict::Observable::Identity) {
    throw ConfigError("rollout: resubstitution needs the identity observable map");
  }
  const Eigen::Index n_obs = dict.n_obs();
  Eigen::MatrixXd out(n_obs, params.cols());
  Eigen::VectorXd psi = dict.evaluate(x0);
  for (Eigen::Index n = 0; n < params.cols(); ++n) {
    psi = op.apply(params.col(n), psi);
    out.col(n) = psi.segment(1, n_obs);
    if (resubstitute) psi = dict.evaluate(out.col(n));
    if (!psi.allFinite()) throw NumericalError("rollout: non-finite lift at step " + std::to_string(n + 1));
  }
  return out;
}

Eigen::VectorXd relative_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& prediction) {
  require_dims(truth.rows() == prediction.rows() && truth.cols() == prediction.cols(),
               "relative_error: truth and prediction shapes differ");
  Eigen::VectorXd e(truth.cols());
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index n = 0; n < truth.cols(); ++n) {
    num += (prediction.col(n) - truth.col(n)).squaredNorm();
    den += truth.col(n).squaredNorm();
    if (den == 0.0) throw NumericalError("relative_error: truth is zero up to step " + std::to_string(n + 1));
    e(n) = std::sqrt(num) / std::sqrt(den);
  }
  return e;
}

SuiteResult evaluate_suite(const std::vector<Predictor>& predictors, const TrajectoryDataset& test, bool resubstitute,
                           std::size_t threads) {
  if (test.trajectories() == 0) throw ConfigError("evaluate: empty test set");
  SuiteResult result;
  result.dt = test.dt;
  const Eigen::Index m = test.trajectories();
  const Eigen::Index n = test.steps();
  for (const auto& p : predictors) {
    p.validate();
    ModelErrors row;
    row.name = p.name;
    row.per_trajectory.resize(m, n);
    parallel_for(
        static_cast<std::size_t>(m),
        [&](std::size_t i) {
          const auto k = static_cast<Eigen::Index>(i);
          const LiftedModel& lm = p.select(test.params[i]);
          const Eigen::MatrixXd pred = rollout(lm.dict, lm.op, test.states[i].col(0), test.params[i], resubstitute);
          const Eigen::MatrixXd truth = lm.dict.observables_batch(test.states[i].rightCols(n));
          row.per_trajectory.row(k) = relative_error(truth, pred).transpose();
        },
        threads);
    row.mean = row.per_trajectory.colwise().mean().transpose();
    row.stddev = Eigen::VectorXd::Zero(n);
    if (m > 1) {
      const Eigen::MatrixXd centered = row.per_trajectory.rowwise() - row.mean.transpose();
      row.stddev = (centered.colwise().squaredNorm().transpose() / static_cast<double>(m - 1)).cwiseSqrt();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_error_csv(const SuiteResult& result, std::ostream& out) {
  out << "model,trajectory,n,t,E\n";
  out.precision(17);
  for (const auto& row : result.rows) {
    for (Eigen::Index m = 0; m < row.per_trajectory.rows(); ++m) {
      for (Eigen::Index n = 0; n < row.per_trajectory.cols(); ++n) {
        out << row.name << ',' << m << ',' << n + 1 << ',' << static_cast<double>(n + 1) * result.dt << ','
            << row.per_trajectory(m, n) << '\n';
      }
    }
  }
}

void write_summary_csv(const SuiteResult& result, std::ostream& out) {
  out << "model,n,t,mean,stddev\n";
  out.precision(17);
  for (const auto& row : result.rows) {
    for (Eigen::Index n = 0; n < row.mean.size(); ++n) {
      out << row.name << ',' << n + 1 << ',' << static_cast<double>(n + 1) * result.dt << ',' << row.mean(n) << ','
          << row.stddev(n) << '\n';
    }
  }
}

void write_prediction_csv(const Predictor& predictor, const TrajectoryDataset& test, bool resubstitute,
                          std::ostream& out) {
  predictor.validate();
  const Eigen::Index n_obs = predictor.members.front().dict.n_obs();
  out << "trajectory,n,t";
  for (Eigen::Index i = 1; i <= n_obs; ++i) out << ",y_" << i;
  for (Eigen::Index i = 1; i <= n_obs; ++i) out << ",yhat_" << i;
  out << '\n';
  out.precision(17);
  for (Eigen::Index m = 0; m < test.trajectories(); ++m) {
    const auto k = static_cast<std::size_t>(m);
    const LiftedModel& lm = predictor.select(test.params[k]);
    const Eigen::MatrixXd pred = rollout(lm.dict, lm.op, test.states[k].col(0), test.params[k], resubstitute);
    const Eigen::MatrixXd truth = lm.dict.observables_batch(test.states[k].rightCols(test.steps()));
    for (Eigen::Index n = 0; n < pred.cols(); ++n) {
      out << m << ',' << n + 1 << ',' << static_cast<double>(n + 1) * test.dt;
      for (Eigen::Index i = 0; i < n_obs; ++i) out << ',' << truth(i, n);
      for (Eigen::Index i = 0; i < n_obs; ++i) out << ',' << pred(i, n);
      out << '\n';
    }
  }
}

}  // namespace pk::eval
