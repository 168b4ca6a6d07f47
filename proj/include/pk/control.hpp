#pragma once
// Optimal control on the lifted dynamics: Bolza costs over K(u) products,
// receding-horizon tracking against the true plant, and the generator rank test.

#include "pk/dictionary.hpp"
#include "pk/dynamics.hpp"
#include "pk/koopman.hpp"
#include "pk/optim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace pk::ctrl {

/// terminal_weight |B psi_N - r_T|^2
///   + sum_{n=1..N} (running_weight |B psi_n - r_n|^2 + lambda |u_{n-1}|^2)
/// with psi_{n} = K(u_{n-1}) psi_{n-1} (A psi + B_u u for the affine variant).
struct BolzaProblem {
  /// rows x n_psi
  Eigen::MatrixXd selector;
  Eigen::VectorXd psi0;
  /// rows x N; column n-1 is the target for psi_n.
  Eigen::MatrixXd reference;
  double running_weight = 1.0;
  double lambda = 0.0;
  double terminal_weight = 0.0;
  Eigen::VectorXd terminal_reference;

  Eigen::Index horizon() const { return reference.cols(); }
};

/// Cost of the control sequence u (n_u x N). When `grad` is given it receives
/// d cost / d u with the same shape.
double lifted_bolza_cost(const koop::OperatorModel& op, const BolzaProblem& problem, const Eigen::MatrixXd& u,
                         Eigen::MatrixXd* grad = nullptr);

struct TrackingProblem {
  /// tracked rows x (steps + 1): r_0 .. r_{N_T}
  Eigen::MatrixXd reference;
  /// Indices into g(x) of the tracked observables.
  std::vector<Eigen::Index> observables{0};
  double lambda = 0.0;
  int horizon = 10;
  int steps = 0;
  double dt = 0.01;
  /// Per control component.
  optim::BoxBounds box;
  Eigen::VectorXd x0;
  double plant_tol = 1e-8;
  optim::MinimizeOptions options;

  void validate() const;
};

struct MpcSolution {
  /// n_u x horizon
  Eigen::MatrixXd u;
  optim::MinimizeResult stats;
  double seconds = 0.0;

  Eigen::VectorXd first() const { return u.col(0); }
};

/// Minimizes the tracking cost over one window from the measured state x.
/// `window` holds r_{n+1} .. r_{n+tau}; `warm_start` (n_u x tau) or empty for
/// a cold start at u = 0 clamped into the box.
MpcSolution mpc_step(const dict::Dictionary& dict, const koop::OperatorModel& op,
                     const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::MatrixXd& window,
                     const std::vector<Eigen::Index>& observables, double lambda, const optim::BoxBounds& box,
                     const Eigen::MatrixXd& warm_start, const optim::MinimizeOptions& options = {});

struct ControlResult {
  double dt = 0.0;
  /// n_u x steps; column n is applied over [t_n, t_{n+1}].
  Eigen::MatrixXd controls;
  /// state_dim x (steps + 1)
  Eigen::MatrixXd states;
  /// tracked rows x (steps + 1), measured on the plant
  Eigen::MatrixXd tracked;
  Eigen::MatrixXd reference;
  std::vector<double> seconds;
  std::vector<int> iterations;
  std::vector<bool> converged;
  /// Steps actually completed; less than `steps` when the plant blew up.
  int completed = 0;
  std::string message;
};

/// Receding-horizon loop: solve, apply the first control to the plant
/// (RK23 at problem.plant_tol), measure, shift the solution as the next warm
/// start. Windows running past the end repeat the last reference. A plant
/// failure stops the loop and returns the partial result with a message.
ControlResult closed_loop(const TrackingProblem& problem, const dict::Dictionary& dict, const koop::OperatorModel& op,
                          const dyn::System& plant);

/// n,t,u_1..,tracked_1..,reference_1..,seconds,iterations; row n holds the
/// control applied over [t_{n-1}, t_n] and the plant observables at t_n.
void write_control_csv(const ControlResult& result, std::ostream& out);

struct ControllabilityReport {
  Eigen::Index samples = 0;
  /// d^2 x samples; column i is the row-major flattening of (K(u_i) - I) / dt.
  Eigen::MatrixXd c;
  Eigen::VectorXd singular_values;
  double threshold = 0.0;
  Eigen::Index rank = 0;
  Eigen::Index required_rank = 0;

  bool controllable() const { return rank >= required_rank; }
};

/// Samples u uniformly in the box. The numerical rank counts singular values
/// above threshold * sigma_1. The required rank is d(d-1) for network
/// operators with the fixed first row and d^2 otherwise.
ControllabilityReport controllability(const koop::OperatorModel& op, double dt, const optim::BoxBounds& box,
                                      Eigen::Index samples, std::uint64_t seed, double threshold = 1e-6,
                                      std::size_t threads = 0);

/// index,sigma,relative
void write_singular_values_csv(const ControllabilityReport& report, std::ostream& out);

/// Inclusive step windows of the two mass ramps.
using Windows = std::vector<std::pair<int, int>>;
inline const Windows kKdvRampWindows{{0, 59}, {500, 619}};

/// Open-loop control for KdV mass tracking without regularization: every
/// component at the forcing's maximizing value (1/2 for sin, 1 for linear)
/// inside the windows, 0 elsewhere. 3 x steps.
Eigen::MatrixXd kdv_analytic_mass_control(dyn::KdvForcing forcing, int steps, const Windows& windows = kKdvRampWindows);

/// d(mass)/dt on the grid under control u: dx * sum_j w(x_j, u).
double kdv_mass_rate(const dyn::System& kdv, const Eigen::Ref<const Eigen::VectorXd>& u);

}  // namespace pk::ctrl
