#pragma once
// Ground-truth simulators for the benchmark systems and the integrators that drive them.
//
// Systems:
//   duffing  x1' = x2, x2' = -d x2 - x1 (b + a x1^2),       u = (d, a, b)
//   vdpm     x1' = x2, x2' = (k1 - k2 x1^2) x2 - (w0^2 + 2 mu u^2 - mu) x1 + k3 u
//   fhn      v_t = v_xx + v - v^3 - w + forcing(u),  w_t = delta w_xx + eps (v - a1 w - a0)
//            on (-10, 10) with Neumann boundaries, state (v, w) stacked
//   kdv      eta_t + eta eta_x + eta_xxx = sum_i v_i(x) s(u_i) on [-pi, pi), periodic

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <variant>

namespace pk::dyn {

struct Duffing {};

struct Vdpm {
  double mu = 1.0;
  double k1 = 2.0, k2 = 2.0, k3 = 1.0, w0 = 1.0;
};

struct Fhn {
  Eigen::Index nx = 10;
  int control_dim = 1;
  double delta = 4.0, epsilon = 0.03, a1 = 2.0, a0 = -0.03;
  std::array<double, 3> centers{-5.0, 0.0, 5.0};
  double x_min = -10.0, x_max = 10.0;

  double dx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
  double grid(Eigen::Index j) const { return x_min + static_cast<double>(j) * dx(); }
};

enum class KdvForcing { Sin, Linear };

struct Kdv {
  Eigen::Index nx = 128;
  KdvForcing forcing = KdvForcing::Sin;
  std::array<double, 3> centers{-1.5707963267948966, 0.0, 1.5707963267948966};
  double width = 25.0;

  double dx() const;
  double grid(Eigen::Index j) const;
  /// v_i(x_j) = exp(-width (x_j - c_i)^2)
  double profile(int i, Eigen::Index j) const;
  double shape(double u) const;
};

/// One of the benchmark systems.
class System {
 public:
  using Variant = std::variant<Duffing, Vdpm, Fhn, Kdv>;

  System() = default;
  System(Variant v);  // NOLINT(google-explicit-constructor)

  const Variant& variant() const { return v_; }
  std::string name() const;
  Eigen::Index state_dim() const;
  Eigen::Index param_dim() const;

  /// Time derivative at (x, u). Throws DimensionError on size mismatch.
  Eigen::VectorXd rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  void rhs_into(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::VectorXd& out) const;

  template <class T>
  const T* as() const {
    return std::get_if<T>(&v_);
  }

 private:
  Variant v_{Duffing{}};
  // Spatial forcing profiles, grid x 3 (PDE variants only).
  Eigen::MatrixXd forcing_;
};

/// Classical RK4 with u held over the step. Throws NumericalError on a non-finite result.
Eigen::VectorXd rk4_step(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt);

/// `substeps` RK4 steps of size dt / substeps.
Eigen::VectorXd rk4_integrate(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                              int substeps);

struct Rk23Stats {
  int accepted = 0;
  int rejected = 0;
};

/// Adaptive Bogacki-Shampine 3(2) over exactly `dt`. The embedded error of
/// every accepted substep satisfies |e_i| <= tol (1 + |x_i|). `h_hint`, when
/// given, seeds the first trial substep and receives the last accepted one.
/// Throws NumericalError when the substep underflows.
Eigen::VectorXd rk23_step(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                          double tol, double* h_hint = nullptr, Rk23Stats* stats = nullptr);

/// RK4 substeps per sample interval used by `advance` (0 for systems advanced by RK23).
/// Duffing 10, VdPM 1, FHN the smallest count with diffusion CFL delta h / dx^2 <= 0.25.
int default_substeps(const System& sys, double dt);

/// Advances one sample interval with the system's default integrator: RK4 for
/// the ODEs and FHN, RK23 at `rk23_tol` for KdV.
Eigen::VectorXd advance(const System& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt,
                        double rk23_tol = 1e-8, double* h_hint = nullptr);

/// Rectangle-rule integrals on the periodic KdV grid.
double mass(const Eigen::VectorXd& eta);
double momentum(const Eigen::VectorXd& eta);

/// Duffing energy x2^2/2 + b x1^2/2 + a x1^4/4 for u = (d, a, b).
double duffing_energy(const Eigen::VectorXd& x, const Eigen::VectorXd& u);

}  // namespace pk::dyn
