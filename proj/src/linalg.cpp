#include "pk/linalg.hpp"

#include "pk/error.hpp"

#include <cmath>

namespace pk::linalg {

namespace {

constexpr double kRcondFloor = 1e-12;

// Iterative refinement with the residual C - W A accumulated in extended precision.
template <class Solve>
void refine(Eigen::MatrixXd& w, const Eigen::MatrixXd& a, const Eigen::MatrixXd& c, Solve&& solve) {
  using Ext = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const Ext a_ext = a.cast<long double>();
  const Ext c_ext = c.cast<long double>();
  for (int it = 0; it < 2; ++it) {
    const Eigen::MatrixXd r = (c_ext - w.cast<long double>() * a_ext).cast<double>();
    w += solve(r);
  }
}

Eigen::MatrixXd qr_fallback(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& cross, double ridge) {
  // (G + rI) W^T = C^T solved by rank-revealing QR.
  const Eigen::Index n = gram.rows();
  const Eigen::MatrixXd a = gram + ridge * Eigen::MatrixXd::Identity(n, n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (ridge == 0.0 && qr.rank() < n) throw NumericalError("ridge_solve: singular Gram matrix with zero ridge");
  Eigen::MatrixXd w = qr.solve(cross.transpose()).transpose();
  refine(w, a, cross, [&](const Eigen::MatrixXd& r) { return Eigen::MatrixXd(qr.solve(r.transpose()).transpose()); });
  return w;
}

}  // namespace

Eigen::MatrixXd ridge_solve_gram(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& cross, double ridge,
                                 RidgeInfo* info) {
  require_dims(gram.rows() == gram.cols(), "ridge_solve: Gram matrix must be square");
  require_dims(cross.cols() == gram.rows(), "ridge_solve: cross term shape mismatch");
  require_dims(ridge >= 0.0, "ridge_solve: ridge must be non-negative");
  if (!gram.allFinite() || !cross.allFinite()) throw NumericalError("ridge_solve: non-finite input");
  const Eigen::Index n = gram.rows();
  const Eigen::MatrixXd a = gram + ridge * Eigen::MatrixXd::Identity(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (info) info->rcond = rcond;
  if (llt.info() == Eigen::Success && rcond >= kRcondFloor) {
    if (info) info->used_qr = false;
    Eigen::MatrixXd w = llt.solve(cross.transpose()).transpose();
    refine(w, a, cross, [&](const Eigen::MatrixXd& r) { return Eigen::MatrixXd(llt.solve(r.transpose()).transpose()); });
    return w;
  }
  if (info) info->used_qr = true;
  return qr_fallback(gram, cross, ridge);
}

Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, double ridge, RidgeInfo* info) {
  require_dims(z.cols() == y.cols(), "ridge_solve: sample count mismatch");
  require_dims(z.cols() >= 1, "ridge_solve: need at least one sample");
  const Eigen::MatrixXd gram = z * z.transpose();
  const Eigen::MatrixXd cross = y * z.transpose();
  return ridge_solve_gram(gram, cross, ridge, info);
}

}  // namespace pk::linalg
