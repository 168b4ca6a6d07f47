#pragma once
// First-order optimizers: Adam for training, projected L-BFGS for box-constrained control.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>

namespace pk::optim {

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::size_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double learning_rate = 1e-3;

  static AdamState fresh(Eigen::Index n, double learning_rate);
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);

struct BoxBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static BoxBounds uniform(Eigen::Index n, double lo, double hi);
  void validate() const;
  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  bool contains(const Eigen::VectorXd& x) const;
};

/// Returns f(x) and writes its gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct MinimizeOptions {
  int max_iter = 200;
  /// Stop once the projected-gradient infinity norm drops below this.
  double tol = 1e-9;
  int memory = 10;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  double projected_gradient_norm = 0.0;
  /// True when the tolerance was met; false on iteration cap or a stalled line search.
  bool converged = false;
};

/// Gradient-projection L-BFGS on a box. The start is clamped into the box; the
/// result never leaves it and never has a larger objective than the clamped start.
/// Throws NumericalError if the objective is non-finite at the start.
MinimizeResult minimize_box(const Objective& objective, const Eigen::VectorXd& x0, const BoxBounds& bounds,
                            const MinimizeOptions& options = {});

}  // namespace pk::optim
