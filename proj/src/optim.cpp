#include "pk/optim.hpp"

#include "pk/error.hpp"
#include "pk/kernels.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace pk::optim {

AdamState AdamState::fresh(Eigen::Index n, double learning_rate) {
  AdamState s;
  s.first_moment = Eigen::VectorXd::Zero(n);
  s.second_moment = Eigen::VectorXd::Zero(n);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  const Eigen::Index n = params.size();
  require_dims(grads.size() == n && state.first_moment.size() == n && state.second_moment.size() == n,
               "adam_step: length mismatch");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double corr1 = 1.0 / (1.0 - std::pow(state.beta1, t));
  const double corr2 = 1.0 / (1.0 - std::pow(state.beta2, t));
  kernels::adam_update(params.data(), state.first_moment.data(), state.second_moment.data(), grads.data(),
                       static_cast<std::size_t>(n), state.learning_rate, state.beta1, state.beta2, state.eps, corr1,
                       corr2);
}

BoxBounds BoxBounds::uniform(Eigen::Index n, double lo, double hi) {
  BoxBounds b{Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi)};
  b.validate();
  return b;
}

void BoxBounds::validate() const {
  require_dims(lower.size() == upper.size(), "BoxBounds: lower/upper length mismatch");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower(i) <= upper(i))) throw DimensionError("BoxBounds: lower > upper");
  }
}

Eigen::VectorXd BoxBounds::project(const Eigen::VectorXd& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

bool BoxBounds::contains(const Eigen::VectorXd& x) const {
  return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

namespace {

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const BoxBounds& box) {
  if (x.size() == 0) return 0.0;
  return (box.project(x - g) - x).cwiseAbs().maxCoeff();
}

}  // namespace

MinimizeResult minimize_box(const Objective& objective, const Eigen::VectorXd& x0, const BoxBounds& bounds,
                            const MinimizeOptions& options) {
  bounds.validate();
  require_dims(x0.size() == bounds.lower.size(), "minimize_box: x0 / bounds length mismatch");

  MinimizeResult res;
  res.x = bounds.project(x0);
  Eigen::VectorXd g(res.x.size());
  res.f = objective(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !g.allFinite()) throw NumericalError("minimize_box: non-finite objective at start");

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  const Eigen::Index n = res.x.size();

  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    res.projected_gradient_norm = projected_gradient_norm(res.x, g, bounds);
    if (res.projected_gradient_norm < options.tol) {
      res.converged = true;
      break;
    }

    // Variables pinned at a bound with the gradient pushing outward stay fixed.
    Eigen::VectorXd free_mask(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = res.x(i) <= bounds.lower(i) && g(i) > 0.0;
      const bool at_hi = res.x(i) >= bounds.upper(i) && g(i) < 0.0;
      free_mask(i) = (at_lo || at_hi) ? 0.0 : 1.0;
    }
    const Eigen::VectorXd q0 = g.cwiseProduct(free_mask);

    Eigen::VectorXd q = q0;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].cwiseProduct(free_mask).dot(q);
      q -= alpha[k] * y_hist[k].cwiseProduct(free_mask);
    }
    if (!s_hist.empty()) {
      const Eigen::VectorXd& s = s_hist.back();
      const Eigen::VectorXd& y = y_hist.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].cwiseProduct(free_mask).dot(q);
      q += (alpha[k] - beta) * s_hist[k].cwiseProduct(free_mask);
    }
    Eigen::VectorXd dir = -q.cwiseProduct(free_mask);
    double slope = dir.dot(g);
    if (!(slope < 0.0)) {
      dir = -q0;
      slope = dir.dot(g);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    if (!(slope < 0.0)) break;

    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / std::max(q0.cwiseAbs().maxCoeff(), 1e-300));

    // Weak Wolfe search along the projected path: bisect on sufficient
    // decrease failures, expand while the slope is still steep.
    Eigen::VectorXd x_new, g_new(n);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_ok, g_ok;
    double f_ok = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 60; ++trial) {
      x_new = bounds.project(res.x + step * dir);
      f_new = objective(x_new, g_new);
      ++res.evaluations;
      const Eigen::VectorXd d = x_new - res.x;
      const double pred = g.dot(d);
      if (!std::isfinite(f_new) || !g_new.allFinite() || f_new > res.f + 1e-4 * pred) {
        hi = step;
      } else {
        if (f_new < f_ok) {
          x_ok = x_new;
          g_ok = g_new;
          f_ok = f_new;
          accepted = true;
        }
        const bool clipped = (d - step * dir).cwiseAbs().maxCoeff() > 0.0;
        if (g_new.dot(d) >= 0.9 * pred || clipped) break;
        lo = step;
      }
      step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * step;
      if (accepted && std::isfinite(hi) && hi - lo < 1e-3 * hi) break;
    }
    if (accepted) {
      x_new = x_ok;
      g_new = g_ok;
      f_new = f_ok;
    }
    if (!accepted || f_new > res.f) break;

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const bool stalled = s.cwiseAbs().maxCoeff() == 0.0;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    if (stalled) break;
  }
  if (!res.converged) {
    res.projected_gradient_norm = projected_gradient_norm(res.x, g, bounds);
    res.converged = res.projected_gradient_norm < options.tol;
  }
  return res;
}

}  // namespace pk::optim
