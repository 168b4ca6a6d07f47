#include "pk/dictionary.hpp"

#include "pk/dynamics.hpp"
#include "pk/error.hpp"
#include "pk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pk::dict {

Eigen::MatrixXd Scaler::apply(const Eigen::MatrixXd& x) const {
  if (!active()) return x;
  require_dims(x.rows() == shift.size(), "scaler: dimension mismatch");
  return (x.colwise() - shift).array().colwise() * scale.array();
}

Scaler Scaler::fit(const Eigen::MatrixXd& x) {
  require_dims(x.cols() >= 1, "scaler: need data");
  const Eigen::VectorXd lo = x.rowwise().minCoeff();
  const Eigen::VectorXd hi = x.rowwise().maxCoeff();
  Scaler s;
  s.shift = 0.5 * (lo + hi);
  s.scale = (hi - lo).unaryExpr([](double w) { return w > 0.0 ? 2.0 / w : 1.0; });
  return s;
}

Dictionary Dictionary::prefix_only(Observable g, Eigen::Index state_dim) {
  require_dims(state_dim >= 1, "dictionary: state_dim must be >= 1");
  Dictionary d;
  d.g_ = g;
  d.state_dim_ = state_dim;
  d.tail_ = Tail::None;
  return d;
}

Dictionary Dictionary::network(Observable g, Eigen::Index state_dim, Eigen::Index n_psi,
                               std::vector<Eigen::Index> hidden_widths, std::uint64_t seed) {
  Dictionary d = prefix_only(g, state_dim);
  const Eigen::Index tail = n_psi - 1 - d.n_obs();
  require_dims(tail >= 0, "dictionary: n_psi too small for the fixed prefix");
  if (tail == 0) return d;
  d.tail_ = Tail::Network;
  d.spec_ = nn::NetworkSpec{state_dim, std::move(hidden_widths), tail, nn::Activation::Tanh, true};
  nn::validate(d.spec_);
  d.params_ = nn::init_params(d.spec_, seed);
  return d;
}

Dictionary Dictionary::rbf_from(Observable g, Eigen::MatrixXd centers, double gamma) {
  require_dims(gamma > 0.0, "rbf dictionary: gamma must be positive");
  Dictionary d = prefix_only(g, centers.rows());
  if (centers.cols() == 0) return d;
  d.tail_ = Tail::Rbf;
  d.centers_ = std::move(centers);
  d.gamma_ = gamma;
  return d;
}

Dictionary Dictionary::rbf(Observable g, const Eigen::MatrixXd& data, Eigen::Index n_centers, std::uint64_t seed) {
  require_dims(data.cols() >= 1, "rbf dictionary: need data");
  require_dims(n_centers >= 0, "rbf dictionary: negative center count");
  const Eigen::VectorXd lo = data.rowwise().minCoeff();
  const Eigen::VectorXd hi = data.rowwise().maxCoeff();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd centers(data.rows(), n_centers);
  for (Eigen::Index k = 0; k < n_centers; ++k) {
    for (Eigen::Index i = 0; i < data.rows(); ++i) centers(i, k) = lo(i) + (hi(i) - lo(i)) * unit(rng);
  }
  double gamma = 1.0;
  if (n_centers >= 2) {
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n_centers * (n_centers - 1) / 2));
    for (Eigen::Index a = 0; a < n_centers; ++a) {
      for (Eigen::Index b = a + 1; b < n_centers; ++b) dist.push_back((centers.col(a) - centers.col(b)).norm());
    }
    const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    double median = *mid;
    if (dist.size() % 2 == 0) median = 0.5 * (median + *std::max_element(dist.begin(), mid));
    if (median > 0.0) gamma = 1.0 / (2.0 * median * median);
  }
  return rbf_from(g, std::move(centers), gamma);
}

Eigen::Index Dictionary::n_obs() const { return g_ == Observable::Identity ? state_dim_ : 2; }

Eigen::Index Dictionary::n_psi() const {
  Eigen::Index tail = 0;
  if (tail_ == Tail::Network) tail = spec_.output_dim;
  if (tail_ == Tail::Rbf) tail = centers_.cols();
  return 1 + n_obs() + tail;
}

void Dictionary::set_scaler(Scaler s) {
  if (s.active()) {
    require_dims(s.shift.size() == state_dim_ && s.scale.size() == state_dim_, "scaler: dimension mismatch");
  }
  scaler_ = std::move(s);
}

Eigen::VectorXd Dictionary::observables(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require_dims(x.size() == state_dim_, "dictionary: state dimension mismatch");
  if (g_ == Observable::Identity) return x;
  Eigen::VectorXd out(2);
  out << dyn::mass(x), dyn::momentum(x);
  return out;
}

Eigen::MatrixXd Dictionary::observables_batch(const Eigen::MatrixXd& x) const {
  require_dims(x.rows() == state_dim_, "dictionary: state dimension mismatch");
  if (g_ == Observable::Identity) return x;
  Eigen::MatrixXd out(2, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out(0, j) = dyn::mass(x.col(j));
    out(1, j) = dyn::momentum(x.col(j));
  }
  return out;
}

Eigen::MatrixXd Dictionary::prefix_batch(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(1 + n_obs(), x.cols());
  out.row(0).setOnes();
  out.bottomRows(n_obs()) = observables_batch(x);
  return out;
}

Eigen::MatrixXd Dictionary::tail_batch(const Eigen::MatrixXd& z) const {
  if (tail_ == Tail::Network) return nn::forward_batch(spec_, params_, z);
  Eigen::MatrixXd out(centers_.cols(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index k = 0; k < centers_.cols(); ++k) {
      const double r2 = kernels::squared_distance(z.col(j).data(), centers_.col(k).data(),
                                                  static_cast<std::size_t>(z.rows()));
      out(k, j) = std::exp(-gamma_ * r2);
    }
  }
  return out;
}

Eigen::VectorXd Dictionary::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return evaluate_batch(Eigen::MatrixXd(x)).col(0);
}

Eigen::MatrixXd Dictionary::evaluate_batch(const Eigen::MatrixXd& x) const {
  require_dims(x.rows() == state_dim_, "dictionary: state dimension mismatch");
  Eigen::MatrixXd out(n_psi(), x.cols());
  out.topRows(1 + n_obs()) = prefix_batch(x);
  if (tail_ != Tail::None) out.bottomRows(tail_dim()) = tail_batch(scaler_.apply(x));
  return out;
}

Dictionary::Prepared Dictionary::prepare(const Eigen::MatrixXd& x) const {
  require_dims(x.rows() == state_dim_, "dictionary: state dimension mismatch");
  Prepared p;
  p.prefix = prefix_batch(x);
  if (tail_ == Tail::Network) {
    p.tail_input = scaler_.apply(x);
  } else if (tail_ == Tail::Rbf) {
    // Fixed tail: fold it into the constant block.
    Eigen::MatrixXd full(n_psi(), x.cols());
    full.topRows(p.prefix.rows()) = p.prefix;
    full.bottomRows(tail_dim()) = tail_batch(scaler_.apply(x));
    p.prefix = std::move(full);
  }
  return p;
}

ad::Var Dictionary::lift(ad::Tape& tape, ad::Var theta, Eigen::Index offset, const Prepared& prepared) const {
  const ad::Var head = tape.constant(prepared.prefix);
  if (tail_ != Tail::Network) return head;
  const ad::Var tail = nn::forward(tape, spec_, theta, offset, tape.constant(prepared.tail_input));
  const ad::Var parts[] = {head, tail};
  return tape.vcat(parts);
}

ad::Var Dictionary::lift(ad::Tape& tape, ad::Var theta, Eigen::Index offset, const Eigen::MatrixXd& x) const {
  return lift(tape, theta, offset, prepare(x));
}

Eigen::MatrixXd selector(Eigen::Index n_obs, Eigen::Index n_psi) {
  require_dims(n_obs >= 1 && n_psi >= n_obs + 1, "selector: need n_psi >= n_obs + 1");
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n_obs, n_psi);
  b.middleCols(1, n_obs).setIdentity();
  return b;
}

Eigen::MatrixXd selector_rows(Eigen::Index n_obs, Eigen::Index n_psi, const std::vector<Eigen::Index>& rows) {
  const Eigen::MatrixXd full = selector(n_obs, n_psi);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), n_psi);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_dims(rows[i] >= 0 && rows[i] < n_obs, "selector: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = full.row(rows[i]);
  }
  return out;
}

std::string to_string(Observable g) { return g == Observable::Identity ? "identity" : "mass_momentum"; }

Observable observable_from_string(const std::string& s) {
  if (s == "identity") return Observable::Identity;
  if (s == "mass_momentum") return Observable::MassMomentum;
  throw ConfigError("unknown observable map '" + s + "'");
}

}  // namespace pk::dict
