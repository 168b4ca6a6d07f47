#pragma once
// Test-only reference computations, kept independent of the library code paths they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace pk::testing {

/// Central differences of `f` at `x` for the listed coordinates.
inline std::vector<double> central_differences(const std::function<double(const Eigen::VectorXd&)>& f,
                                               const Eigen::VectorXd& x, const std::vector<Eigen::Index>& coords,
                                               double h = 1e-5) {
  std::vector<double> out;
  out.reserve(coords.size());
  Eigen::VectorXd xp = x;
  for (auto i : coords) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    out.push_back((fp - fm) / (2.0 * h));
  }
  return out;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& reference,
                             double floor = 1e-8) {
  double num = 0.0, den = floor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    num = std::max(num, std::abs(analytic[i] - reference[i]));
    den = std::max(den, std::abs(reference[i]));
  }
  return num / den;
}

/// Dense matrix exponential by scaling and squaring a truncated Taylor series.
inline Eigen::MatrixXd expm_taylor(const Eigen::MatrixXd& a) {
  int squarings = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.25) {
    norm *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd scaled = a / std::pow(2.0, squarings);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= 20; ++k) {
    term = term * scaled / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

/// Minimizes a 1-D or 2-D function over a box by repeated dense-grid refinement.
inline Eigen::VectorXd grid_refine_minimum(const std::function<double(const Eigen::VectorXd&)>& f,
                                           Eigen::VectorXd lo, Eigen::VectorXd hi, int points = 201,
                                           int rounds = 8) {
  const Eigen::Index n = lo.size();
  Eigen::VectorXd best = 0.5 * (lo + hi);
  for (int r = 0; r < rounds; ++r) {
    double best_f = f(best);
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    const auto total = static_cast<long>(std::pow(points, n));
    for (long flat = 0; flat < total; ++flat) {
      long rem = flat;
      Eigen::VectorXd x(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const long ik = rem % points;
        rem /= points;
        x(k) = lo(k) + (hi(k) - lo(k)) * static_cast<double>(ik) / (points - 1);
      }
      const double v = f(x);
      if (v < best_f) {
        best_f = v;
        best = x;
      }
    }
    const Eigen::VectorXd width = (hi - lo) * (4.0 / (points - 1));
    const Eigen::VectorXd new_lo = (best - width).cwiseMax(lo);
    const Eigen::VectorXd new_hi = (best + width).cwiseMin(hi);
    lo = new_lo;
    hi = new_hi;
  }
  return best;
}

}  // namespace pk::testing
