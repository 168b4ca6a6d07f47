#include "pk/dynamics.hpp"

#include "pk/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace pk::dyn {

double Kdv::dx() const { return 2.0 * std::numbers::pi / static_cast<double>(nx); }

double Kdv::grid(Eigen::Index j) const { return -std::numbers::pi + static_cast<double>(j) * dx(); }

double Kdv::profile(int i, Eigen::Index j) const {
  const double r = grid(j) - centers[static_cast<std::size_t>(i)];
  return std::exp(-width * r * r);
}

double Kdv::shape(double u) const { return forcing == KdvForcing::Sin ? std::sin(std::numbers::pi * u) : u; }

System::System(Variant v) : v_(std::move(v)) {
  if (const auto* f = as<Fhn>()) {
    require_dims(f->nx >= 3, "fhn: need at least 3 grid points");
    require_dims(f->control_dim == 1 || f->control_dim == 3, "fhn: control_dim must be 1 or 3");
  }
  if (const auto* k = as<Kdv>()) require_dims(k->nx >= 5, "kdv: need at least 5 grid points");
  if (const auto* p = as<Vdpm>()) require_dims(p->mu >= 0.0, "vdpm: mu must be non-negative");
  if (const auto* f = as<Fhn>()) {
    forcing_.resize(f->nx, 3);
    for (Eigen::Index j = 0; j < f->nx; ++j) {
      for (int k = 0; k < 3; ++k) {
        const double r = f->grid(j) - f->centers[static_cast<std::size_t>(k)];
        forcing_(j, k) = std::exp(-0.5 * r * r);
      }
    }
  }
  if (const auto* k = as<Kdv>()) {
    forcing_.resize(k->nx, 3);
    for (Eigen::Index j = 0; j < k->nx; ++j) {
      for (int i = 0; i < 3; ++i) forcing_(j, i) = k->profile(i, j);
    }
  }
}

std::string System::name() const {
  struct {
    std::string operator()(const Duffing&) const { return "duffing"; }
    std::string operator()(const Vdpm&) const { return "vdpm"; }
    std::string operator()(const Fhn&) const { return "fhn"; }
    std::string operator()(const Kdv&) const { return "kdv"; }
  } visitor;
  return std::visit(visitor, v_);
}

Eigen::Index System::state_dim() const {
  struct {
    Eigen::Index operator()(const Duffing&) const { return 2; }
    Eigen::Index operator()(const Vdpm&) const { return 2; }
    Eigen::Index operator()(const Fhn& f) const { return 2 * f.nx; }
    Eigen::Index operator()(const Kdv& k) const { return k.nx; }
  } visitor;
  return std::visit(visitor, v_);
}

Eigen::Index System::param_dim() const {
  struct {
    Eigen::Index operator()(const Duffing&) const { return 3; }
    Eigen::Index operator()(const Vdpm&) const { return 1; }
    Eigen::Index operator()(const Fhn& f) const { return f.control_dim; }
    Eigen::Index operator()(const Kdv&) const { return 3; }
  } visitor;
  return std::visit(visitor, v_);
}

namespace {

void rhs_duffing(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::VectorXd& out) {
  const double d = u(0), a = u(1), b = u(2);
  out(0) = x(1);
  out(1) = -d * x(1) - x(0) * (b + a * x(0) * x(0));
}

void rhs_vdpm(const Vdpm& p, const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::VectorXd& out) {
  const double c = u(0);
  out(0) = x(1);
  out(1) = (p.k1 - p.k2 * x(0) * x(0)) * x(1) - (p.w0 * p.w0 + 2.0 * p.mu * c * c - p.mu) * x(0) + c * p.k3;
}

// Second difference with mirrored ghost cells (zero normal derivative at both ends).
inline double neumann_laplacian(const double* f, Eigen::Index j, Eigen::Index n, double inv_dx2) {
  const double left = j == 0 ? f[1] : f[j - 1];
  const double right = j == n - 1 ? f[n - 2] : f[j + 1];
  return (left - 2.0 * f[j] + right) * inv_dx2;
}

void rhs_fhn(const Fhn& p, const Eigen::MatrixXd& prof, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
             Eigen::VectorXd& out) {
  const Eigen::Index n = p.nx;
  const double* v = x.data();
  const double* w = x.data() + n;
  const double dx = p.dx();
  const double inv_dx2 = 1.0 / (dx * dx);
  for (Eigen::Index j = 0; j < n; ++j) {
    double forcing = 0.0;
    for (int k = 0; k < 3; ++k) forcing += (p.control_dim == 1 ? u(0) : u(k)) * prof(j, k);
    out(j) = neumann_laplacian(v, j, n, inv_dx2) + v[j] - v[j] * v[j] * v[j] - w[j] + forcing;
    out(n + j) = p.delta * neumann_laplacian(w, j, n, inv_dx2) + p.epsilon * (v[j] - p.a1 * w[j] - p.a0);
  }
}

void rhs_kdv(const Kdv& p, const Eigen::MatrixXd& prof, const Eigen::VectorXd& eta, const Eigen::VectorXd& u,
             Eigen::VectorXd& out) {
  const Eigen::Index n = p.nx;
  const double dx = p.dx();
  const double c1 = 1.0 / (2.0 * dx);
  const double c3 = 1.0 / (2.0 * dx * dx * dx);
  std::array<double, 3> s{};
  for (int i = 0; i < 3; ++i) s[static_cast<std::size_t>(i)] = p.shape(u(i));
  auto at = [&](Eigen::Index j) { return eta((j + n) % n); };
  for (Eigen::Index j = 0; j < n; ++j) {
    const double em2 = at(j - 2), em1 = at(j - 1), ep1 = at(j + 1), ep2 = at(j + 2);
    const double d1 = (ep1 - em1) * c1;
    const double d3 = (ep2 - 2.0 * ep1 + 2.0 * em1 - em2) * c3;
    double w = 0.0;
    for (int i = 0; i < 3; ++i) w += prof(j, i) * s[static_cast<std::size_t>(i)];
    out(j) = -eta(j) * d1 - d3 + w;
  }
}

void check_finite(const Eigen::VectorXd& x, const char* where) {
  if (!x.allFinite()) throw NumericalError(std::string(where) + ": non-finite state");
}

}  // namespace

void System::rhs_into(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::VectorXd& out) const {
  require_dims(x.size() == state_dim(), name() + ": state dimension mismatch");
  require_dims(u.size() == param_dim(), name() + ": parameter dimension mismatch");
  out.resize(x.size());
  if (as<Duffing>()) {
    rhs_duffing(x, u, out);
  } else if (const auto* p = as<Vdpm>()) {
    rhs_vdpm(*p, x, u, out);
  } else if (const auto* f = as<Fhn>()) {
    rhs_fhn(*f, forcing_, x, u, out);
  } else {
    rhs_kdv(*as<Kdv>(), forcing_, x, u, out);
  }
}

Eigen::VectorXd System::rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Eigen::VectorXd out;
  rhs_into(x, u, out);
  return out;
}

Eigen::VectorXd rk4_step(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt) {
  require_dims(dt > 0.0, "rk4_step: dt must be positive");
  Eigen::VectorXd k1, k2, k3, k4;
  sys.rhs_into(x, u, k1);
  sys.rhs_into(x + 0.5 * dt * k1, u, k2);
  sys.rhs_into(x + 0.5 * dt * k2, u, k3);
  sys.rhs_into(x + dt * k3, u, k4);
  Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  check_finite(next, "rk4_step");
  return next;
}

Eigen::VectorXd rk4_integrate(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                              int substeps) {
  require_dims(substeps >= 1, "rk4_integrate: substeps must be >= 1");
  const double h = dt / substeps;
  Eigen::VectorXd y = x;
  for (int s = 0; s < substeps; ++s) y = rk4_step(sys, y, u, h);
  return y;
}

Eigen::VectorXd rk23_step(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                          double tol, double* h_hint, Rk23Stats* stats) {
  require_dims(dt > 0.0, "rk23_step: dt must be positive");
  require_dims(tol > 0.0, "rk23_step: tol must be positive");
  check_finite(x, "rk23_step");
  const double h_min = dt * 1e-12;
  double h = (h_hint && *h_hint > 0.0) ? std::min(*h_hint, dt) : dt;
  double t = 0.0;
  Eigen::VectorXd y = x;
  Eigen::VectorXd k1, k2, k3, k4, y3, err;
  sys.rhs_into(y, u, k1);
  double last_accepted = h;
  while (t < dt) {
    const bool last = t + h >= dt * (1.0 - 1e-14);
    const double step = last ? dt - t : h;
    sys.rhs_into(y + 0.5 * step * k1, u, k2);
    sys.rhs_into(y + 0.75 * step * k2, u, k3);
    y3 = y + step * ((2.0 / 9.0) * k1 + (1.0 / 3.0) * k2 + (4.0 / 9.0) * k3);
    sys.rhs_into(y3, u, k4);
    err = step * ((-5.0 / 72.0) * k1 + (1.0 / 12.0) * k2 + (1.0 / 9.0) * k3 + (-1.0 / 8.0) * k4);
    double ratio = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      ratio = std::max(ratio, std::abs(err(i)) / (1.0 + std::max(std::abs(y(i)), std::abs(y3(i)))));
    }
    if (!std::isfinite(ratio)) ratio = std::numeric_limits<double>::infinity();
    ratio /= tol;
    if (ratio <= 1.0) {
      t = last ? dt : t + step;
      y = y3;
      k1 = k4;
      if (!last) last_accepted = step;
      if (stats) ++stats->accepted;
      const double grow = ratio == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::cbrt(1.0 / ratio));
      h = step * std::max(1.0, grow);
    } else {
      if (stats) ++stats->rejected;
      h = step * std::max(0.2, 0.9 * std::cbrt(1.0 / ratio));
      if (h < h_min) throw NumericalError("rk23_step: substep underflow");
    }
  }
  check_finite(y, "rk23_step");
  if (h_hint) *h_hint = last_accepted;
  return y;
}

int default_substeps(const System& sys, double dt) {
  if (sys.as<Duffing>()) return 10;
  if (sys.as<Vdpm>()) return 1;
  if (const auto* f = sys.as<Fhn>()) {
    const double dx = f->dx();
    return std::max(1, static_cast<int>(std::ceil(f->delta * dt / (0.25 * dx * dx) - 1e-12)));
  }
  return 0;
}

Eigen::VectorXd advance(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                        double rk23_tol, double* h_hint) {
  const int substeps = default_substeps(sys, dt);
  if (substeps == 0) return rk23_step(sys, x, u, dt, rk23_tol, h_hint);
  return rk4_integrate(sys, x, u, dt, substeps);
}

double mass(const Eigen::VectorXd& eta) {
  return 2.0 * std::numbers::pi / static_cast<double>(eta.size()) * eta.sum();
}

double momentum(const Eigen::VectorXd& eta) {
  return 2.0 * std::numbers::pi / static_cast<double>(eta.size()) * eta.squaredNorm();
}

double duffing_energy(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  require_dims(x.size() == 2 && u.size() == 3, "duffing_energy: dimension mismatch");
  const double x1 = x(0), x2 = x(1);
  return 0.5 * x2 * x2 + 0.5 * u(2) * x1 * x1 + 0.25 * u(1) * x1 * x1 * x1 * x1;
}

}  // namespace pk::dyn
