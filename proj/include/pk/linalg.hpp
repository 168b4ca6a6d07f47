#pragma once
// Ridge least squares through the normal equations.

#include <Eigen/Dense>

namespace pk::linalg {

struct RidgeInfo {
  /// Reciprocal condition estimate of the regularized Gram matrix.
  double rcond = 0.0;
  bool used_qr = false;
};

/// W minimizing ||Y - W Z||_F^2 + ridge ||W||_F^2, i.e. W = Y Z^T (Z Z^T + ridge I)^{-1}.
/// Z is features x samples, Y is outputs x samples. Solved with a Cholesky
/// factorization of the Gram matrix; falls back to column-pivoted QR on the
/// stacked system when the reciprocal condition estimate drops below 1e-12.
/// Throws NumericalError when ridge == 0 and the Gram matrix is singular.
Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, double ridge,
                            RidgeInfo* info = nullptr);

/// Same, from accumulated G = Z Z^T and C = Y Z^T.
Eigen::MatrixXd ridge_solve_gram(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& cross, double ridge,
                                 RidgeInfo* info = nullptr);

}  // namespace pk::linalg
