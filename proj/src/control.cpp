#include "pk/control.hpp"

#include "pk/error.hpp"
#include "pk/parallel.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

namespace pk::ctrl {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

optim::BoxBounds repeat_box(const optim::BoxBounds& box, Eigen::Index times) {
  optim::BoxBounds out;
  out.lower = box.lower.replicate(times, 1);
  out.upper = box.upper.replicate(times, 1);
  return out;
}

}  // namespace

double lifted_bolza_cost(const koop::OperatorModel& op, const BolzaProblem& p, const Eigen::MatrixXd& u,
                         Eigen::MatrixXd* grad) {
  const Eigen::Index d = op.dim();
  const Eigen::Index n = p.horizon();
  require_dims(p.psi0.size() == d, "bolza: initial lift dimension mismatch");
  require_dims(p.selector.cols() == d, "bolza: selector width mismatch");
  require_dims(p.reference.rows() == p.selector.rows(), "bolza: reference rows mismatch");
  require_dims(u.rows() == op.n_u() && u.cols() == n, "bolza: control sequence shape mismatch");
  if (p.terminal_weight != 0.0) {
    require_dims(p.terminal_reference.size() == p.selector.rows(), "bolza: terminal reference size mismatch");
  }

  ad::Tape tape;
  const ad::Var uvar = tape.variable(u);
  const ad::Var theta = tape.constant(op.params());
  const ad::Var sel = tape.constant(p.selector);
  ad::Var psi = tape.constant(p.psi0);
  ad::Var kall;
  if (op.has_matrix_form() && n > 0) kall = op.k_columns(tape, theta, 0, uvar);

  ad::Var cost = tape.constant(Eigen::MatrixXd::Zero(1, 1));
  for (Eigen::Index k = 0; k < n; ++k) {
    if (op.has_matrix_form()) {
      psi = tape.batched_matvec(tape.col_block(kall, k, 1), psi);
    } else {
      psi = op.step(tape, theta, 0, tape.col_block(uvar, k, 1), {}, psi);
    }
    if (p.running_weight != 0.0) {
      const ad::Var miss = tape.sub(tape.matmul(sel, psi), tape.constant(p.reference.col(k)));
      cost = tape.add(cost, tape.scale(tape.sum_squares(miss), p.running_weight));
    }
  }
  if (p.terminal_weight != 0.0) {
    const ad::Var miss = tape.sub(tape.matmul(sel, psi), tape.constant(p.terminal_reference));
    cost = tape.add(cost, tape.scale(tape.sum_squares(miss), p.terminal_weight));
  }
  if (p.lambda != 0.0) cost = tape.add(cost, tape.scale(tape.sum_squares(uvar), p.lambda));

  const double value = tape.scalar(cost);
  if (!std::isfinite(value)) throw NumericalError("bolza: non-finite cost");
  if (grad) {
    tape.backward(cost);
    const Eigen::MatrixXd& g = tape.grad(uvar);
    if (g.rows() == u.rows() && g.cols() == u.cols()) {
      *grad = g;
    } else {
      *grad = Eigen::MatrixXd::Zero(u.rows(), u.cols());
    }
  }
  return value;
}

void TrackingProblem::validate() const {
  if (horizon < 1) throw ConfigError("control: horizon must be >= 1");
  if (steps < 1) throw ConfigError("control: steps must be >= 1");
  if (horizon > steps) throw ConfigError("control: horizon must not exceed steps");
  if (!(dt > 0.0)) throw ConfigError("control: dt must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("control: lambda must be >= 0");
  if (!(plant_tol > 0.0)) throw ConfigError("control: plant tolerance must be positive");
  if (observables.empty()) throw ConfigError("control: no tracked observables");
  if (reference.rows() != static_cast<Eigen::Index>(observables.size()) || reference.cols() != steps + 1) {
    throw ConfigError("control: reference must have one row per tracked observable and steps + 1 columns");
  }
  if (!reference.allFinite()) throw ConfigError("control: reference is not finite");
  try {
    box.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("control: ") + e.what());
  }
}

MpcSolution mpc_step(const dict::Dictionary& dict, const koop::OperatorModel& op,
                     const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::MatrixXd& window,
                     const std::vector<Eigen::Index>& observables, double lambda, const optim::BoxBounds& box,
                     const Eigen::MatrixXd& warm_start, const optim::MinimizeOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index nu = op.n_u();
  const Eigen::Index tau = window.cols();
  require_dims(tau >= 1, "mpc: empty reference window");
  require_dims(box.lower.size() == nu && box.upper.size() == nu, "mpc: box dimension mismatch");
  require_dims(window.rows() == static_cast<Eigen::Index>(observables.size()), "mpc: window rows mismatch");

  BolzaProblem p;
  p.selector = dict::selector_rows(dict.n_obs(), dict.n_psi(), observables);
  p.psi0 = dict.evaluate(x);
  p.reference = window;
  p.lambda = lambda;

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(nu * tau);
  if (warm_start.size() > 0) {
    require_dims(warm_start.rows() == nu && warm_start.cols() == tau, "mpc: warm start shape mismatch");
    x0 = warm_start.reshaped();
  }
  const optim::Objective objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    Eigen::MatrixXd gm;
    const double f = lifted_bolza_cost(op, p, v.reshaped(nu, tau), &gm);
    g = gm.reshaped();
    return f;
  };
  MpcSolution sol;
  sol.stats = optim::minimize_box(objective, x0, repeat_box(box, tau), options);
  sol.u = sol.stats.x.reshaped(nu, tau);
  sol.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

ControlResult closed_loop(const TrackingProblem& problem, const dict::Dictionary& dict, const koop::OperatorModel& op,
                          const dyn::System& plant) {
  problem.validate();
  require_dims(problem.x0.size() == plant.state_dim(), "control: initial state dimension mismatch");
  require_dims(op.n_u() == plant.param_dim(), "control: operator and plant parameter dimensions differ");
  require_dims(dict.state_dim() == plant.state_dim(), "control: dictionary and plant state dimensions differ");
  require_dims(problem.box.lower.size() == op.n_u(), "control: box dimension mismatch");
  const int nt = problem.steps;
  const int tau = problem.horizon;
  const auto rows = static_cast<Eigen::Index>(problem.observables.size());

  ControlResult r;
  r.dt = problem.dt;
  r.reference = problem.reference;
  r.controls = Eigen::MatrixXd::Zero(op.n_u(), nt);
  r.states = Eigen::MatrixXd::Zero(plant.state_dim(), nt + 1);
  r.tracked = Eigen::MatrixXd::Zero(rows, nt + 1);
  auto measure = [&](int n) {
    const Eigen::VectorXd g = dict.observables(r.states.col(n));
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::Index k = problem.observables[static_cast<std::size_t>(i)];
      require_dims(k >= 0 && k < g.size(), "control: tracked observable out of range");
      r.tracked(i, n) = g(k);
    }
  };
  r.states.col(0) = problem.x0;
  measure(0);

  Eigen::MatrixXd warm;
  double h_hint = 0.0;
  for (int n = 0; n < nt; ++n) {
    Eigen::MatrixXd window(rows, tau);
    for (int j = 0; j < tau; ++j) window.col(j) = problem.reference.col(std::min(n + 1 + j, nt));
    const MpcSolution sol =
        mpc_step(dict, op, r.states.col(n), window, problem.observables, problem.lambda, problem.box, warm,
                 problem.options);
    r.controls.col(n) = sol.first();
    r.seconds.push_back(sol.seconds);
    r.iterations.push_back(sol.stats.iterations);
    r.converged.push_back(sol.stats.converged);
    try {
      r.states.col(n + 1) = dyn::advance(plant, r.states.col(n), sol.first(), problem.dt, problem.plant_tol, &h_hint);
    } catch (const NumericalError& e) {
      r.message = "plant failure at step " + std::to_string(n + 1) + ": " + e.what();
      return r;
    }
    measure(n + 1);
    r.completed = n + 1;
    warm.resize(sol.u.rows(), tau);
    warm.leftCols(tau - 1) = sol.u.rightCols(tau - 1);
    warm.col(tau - 1) = sol.u.col(tau - 1);
  }
  return r;
}

void write_control_csv(const ControlResult& r, std::ostream& out) {
  const Eigen::Index nu = r.controls.rows();
  const Eigen::Index rows = r.tracked.rows();
  out << "n,t";
  for (Eigen::Index i = 1; i <= nu; ++i) out << ",u_" << i;
  for (Eigen::Index i = 1; i <= rows; ++i) out << ",tracked_" << i;
  for (Eigen::Index i = 1; i <= rows; ++i) out << ",reference_" << i;
  out << ",seconds,iterations\n";
  out.precision(17);
  for (int n = 1; n <= r.completed; ++n) {
    out << n << ',' << n * r.dt;
    for (Eigen::Index i = 0; i < nu; ++i) out << ',' << r.controls(i, n - 1);
    for (Eigen::Index i = 0; i < rows; ++i) out << ',' << r.tracked(i, n);
    for (Eigen::Index i = 0; i < rows; ++i) out << ',' << r.reference(i, n);
    out << ',' << r.seconds[static_cast<std::size_t>(n - 1)] << ',' << r.iterations[static_cast<std::size_t>(n - 1)]
        << '\n';
  }
}

ControllabilityReport controllability(const koop::OperatorModel& op, double dt, const optim::BoxBounds& box,
                                      Eigen::Index samples, std::uint64_t seed, double threshold,
                                      std::size_t threads) {
  if (samples < 1) throw ConfigError("controllability: need at least one sample");
  if (!(threshold > 0.0)) throw ConfigError("controllability: threshold must be positive");
  box.validate();
  require_dims(box.lower.size() == op.n_u(), "controllability: box dimension mismatch");
  const Eigen::Index d = op.dim();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd us(op.n_u(), samples);
  for (Eigen::Index j = 0; j < samples; ++j) {
    for (Eigen::Index i = 0; i < op.n_u(); ++i) {
      us(i, j) = box.lower(i) + (box.upper(i) - box.lower(i)) * unit(rng);
    }
  }

  ControllabilityReport rep;
  rep.samples = samples;
  rep.threshold = threshold;
  rep.c.resize(d * d, samples);
  parallel_for(
      static_cast<std::size_t>(samples),
      [&](std::size_t j) {
        const auto k = static_cast<Eigen::Index>(j);
        const RowMajor g = op.generator(us.col(k), dt);
        rep.c.col(k) = Eigen::Map<const Eigen::VectorXd>(g.data(), d * d);
      },
      threads);
  rep.singular_values = Eigen::BDCSVD<Eigen::MatrixXd>(rep.c).singularValues();
  const double cut = threshold * (rep.singular_values.size() ? rep.singular_values(0) : 0.0);
  rep.rank = (rep.singular_values.array() > cut).count();
  const bool fixed = op.variant() == koop::Variant::Network && op.fixed_first_row();
  rep.required_rank = fixed ? d * (d - 1) : d * d;
  return rep;
}

void write_singular_values_csv(const ControllabilityReport& rep, std::ostream& out) {
  out << "index,sigma,relative\n";
  out.precision(17);
  const double s1 = rep.singular_values.size() ? rep.singular_values(0) : 0.0;
  for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i) {
    out << i + 1 << ',' << rep.singular_values(i) << ',' << (s1 > 0.0 ? rep.singular_values(i) / s1 : 0.0) << '\n';
  }
}

Eigen::MatrixXd kdv_analytic_mass_control(dyn::KdvForcing forcing, int steps, const Windows& windows) {
  if (steps < 1) throw ConfigError("analytic control: steps must be >= 1");
  const double level = forcing == dyn::KdvForcing::Sin ? 0.5 : 1.0;
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(3, steps);
  for (const auto& [first, last] : windows) {
    if (first < 0 || last < first) throw ConfigError("analytic control: malformed ramp window");
    for (int n = first; n <= std::min(last, steps - 1); ++n) u.col(n).setConstant(level);
  }
  return u;
}

double kdv_mass_rate(const dyn::System& kdv, const Eigen::Ref<const Eigen::VectorXd>& u) {
  const auto* k = kdv.as<dyn::Kdv>();
  if (!k) throw ConfigError("mass rate: KdV plant required");
  return k->dx() * kdv.rhs(Eigen::VectorXd::Zero(k->nx), u).sum();
}

}  // namespace pk::ctrl
