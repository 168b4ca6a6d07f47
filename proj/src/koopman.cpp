#include "pk/koopman.hpp"

#include "pk/error.hpp"

#include <utility>

namespace pk::koop {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Constant: return "constant";
    case Variant::Affine: return "affine";
    case Variant::Bilinear: return "bilinear";
    case Variant::Poly: return "poly";
    case Variant::Network: return "network";
  }
  return "constant";
}

Variant variant_from_string(const std::string& s) {
  if (s == "constant") return Variant::Constant;
  if (s == "affine") return Variant::Affine;
  if (s == "bilinear") return Variant::Bilinear;
  if (s == "poly") return Variant::Poly;
  if (s == "network") return Variant::Network;
  throw ConfigError("unknown operator variant '" + s + "'");
}

namespace {

void check_dims(Eigen::Index d, Eigen::Index n_u) {
  require_dims(d >= 1, "operator: dimension must be >= 1");
  require_dims(n_u >= 0, "operator: negative parameter dimension");
}

}  // namespace

OperatorModel OperatorModel::constant(Eigen::Index d, Eigen::Index n_u) {
  check_dims(d, n_u);
  OperatorModel m;
  m.variant_ = Variant::Constant;
  m.d_ = d;
  m.n_u_ = n_u;
  m.params_ = Eigen::VectorXd::Zero(m.param_count());
  return m;
}

OperatorModel OperatorModel::affine(Eigen::Index d, Eigen::Index n_u) {
  OperatorModel m = constant(d, n_u);
  m.variant_ = Variant::Affine;
  m.params_ = Eigen::VectorXd::Zero(m.param_count());
  return m;
}

OperatorModel OperatorModel::bilinear(Eigen::Index d, Eigen::Index n_u) {
  OperatorModel m = constant(d, n_u);
  m.variant_ = Variant::Bilinear;
  m.params_ = Eigen::VectorXd::Zero(m.param_count());
  return m;
}

OperatorModel OperatorModel::poly(Eigen::Index d, Eigen::Index n_u, int max_degree) {
  require_dims(max_degree >= 0, "operator: negative polynomial degree");
  OperatorModel m = constant(d, n_u);
  m.variant_ = Variant::Poly;
  m.degree_ = max_degree;
  m.params_ = Eigen::VectorXd::Zero(m.param_count());
  return m;
}

OperatorModel OperatorModel::network(Eigen::Index d, Eigen::Index n_u, std::vector<Eigen::Index> hidden_widths,
                                     std::uint64_t seed, bool fixed_first_row, bool identity_start) {
  check_dims(d, n_u);
  require_dims(n_u >= 1, "network operator: needs at least one parameter");
  OperatorModel m;
  m.variant_ = Variant::Network;
  m.d_ = d;
  m.n_u_ = n_u;
  m.fixed_first_row_ = fixed_first_row;
  const Eigen::Index rows = fixed_first_row ? d - 1 : d;
  require_dims(rows * d >= 1, "network operator: nothing to learn");
  m.spec_ = nn::NetworkSpec{n_u, std::move(hidden_widths), rows * d, nn::Activation::Tanh, false};
  nn::validate(m.spec_);
  m.params_ = nn::init_params(m.spec_, seed);
  if (!identity_start) return m;
  const auto out = nn::layout(m.spec_).back();
  m.params_.segment(out.weight_offset, out.fan_in * out.fan_out).setZero();
  const Eigen::Index bias = out.bias_offset;
  const Eigen::Index skip = fixed_first_row ? 1 : 0;
  for (Eigen::Index r = 0; r < rows; ++r) m.params_(bias + r * d + r + skip) = 1.0;
  return m;
}

Eigen::Index OperatorModel::n_blocks() const {
  switch (variant_) {
    case Variant::Constant: return 1;
    case Variant::Bilinear: return 1 + n_u_;
    case Variant::Poly: return static_cast<Eigen::Index>(monomial_exponents(static_cast<int>(n_u_), degree_).size());
    default: return 0;
  }
}

Eigen::Index OperatorModel::param_count() const {
  switch (variant_) {
    case Variant::Affine: return d_ * d_ + d_ * n_u_;
    case Variant::Network: return nn::parameter_count(spec_);
    default: return d_ * d_ * n_blocks();
  }
}

Eigen::MatrixXd OperatorModel::k_matrix(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require_dims(u.size() == n_u_, "k_matrix: parameter dimension mismatch");
  require_dims(has_matrix_form(), "k_matrix: the affine variant has no matrix form; use apply");
  Eigen::VectorXd flat(d_ * d_);
  if (variant_ == Variant::Network) {
    const Eigen::VectorXd out = nn::forward(spec_, params_, u);
    if (fixed_first_row_) {
      flat.head(d_).setZero();
      flat(0) = 1.0;
      flat.tail(out.size()) = out;
    } else {
      flat = out;
    }
  } else {
    const Eigen::Map<const Eigen::MatrixXd> blocks(params_.data(), d_ * d_, n_blocks());
    Eigen::VectorXd h(n_blocks());
    if (variant_ == Variant::Constant) {
      h(0) = 1.0;
    } else if (variant_ == Variant::Bilinear) {
      h(0) = 1.0;
      h.tail(n_u_) = u;
    } else {
      h = monomial_features(u, monomial_exponents(static_cast<int>(n_u_), degree_));
    }
    flat.noalias() = blocks * h;
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(flat.data(), d_, d_);
}

Eigen::VectorXd OperatorModel::apply(const Eigen::Ref<const Eigen::VectorXd>& u,
                                     const Eigen::Ref<const Eigen::VectorXd>& psi) const {
  require_dims(psi.size() == d_, "apply: lift dimension mismatch");
  require_dims(u.size() == n_u_, "apply: parameter dimension mismatch");
  if (variant_ == Variant::Affine) return a_matrix() * psi + b_matrix() * u;
  return k_matrix(u) * psi;
}

Eigen::MatrixXd OperatorModel::generator(const Eigen::Ref<const Eigen::VectorXd>& u, double dt) const {
  require_dims(dt > 0.0, "generator: dt must be positive");
  Eigen::MatrixXd k = k_matrix(u);
  k.diagonal().array() -= 1.0;
  return k / dt;
}

Eigen::MatrixXd OperatorModel::a_matrix() const {
  require_dims(variant_ == Variant::Affine, "a_matrix: affine variant only");
  return Eigen::Map<const Eigen::MatrixXd>(params_.data(), d_, d_);
}

Eigen::MatrixXd OperatorModel::b_matrix() const {
  require_dims(variant_ == Variant::Affine, "b_matrix: affine variant only");
  return Eigen::Map<const Eigen::MatrixXd>(params_.data() + d_ * d_, d_, n_u_);
}

ad::Var OperatorModel::k_columns(ad::Tape& tape, ad::Var theta, Eigen::Index offset, ad::Var u) const {
  require_dims(has_matrix_form(), "k_columns: the affine variant has no matrix form");
  const Eigen::Index cols = tape.value(u).cols();
  require_dims(tape.value(u).rows() == n_u_, "k_columns: parameter dimension mismatch");
  if (variant_ == Variant::Network) {
    const ad::Var out = nn::forward(tape, spec_, theta, offset, u);
    if (!fixed_first_row_) return out;
    Eigen::MatrixXd first = Eigen::MatrixXd::Zero(d_, cols);
    first.row(0).setOnes();
    const ad::Var parts[] = {tape.constant(std::move(first)), out};
    return tape.vcat(parts);
  }
  const ad::Var blocks = tape.reshape_block(theta, offset, d_ * d_, n_blocks());
  ad::Var features;
  if (variant_ == Variant::Constant) {
    features = tape.constant(Eigen::MatrixXd::Ones(1, cols));
  } else if (variant_ == Variant::Bilinear) {
    const ad::Var parts[] = {tape.constant(Eigen::MatrixXd::Ones(1, cols)), u};
    features = tape.vcat(parts);
  } else {
    features = tape.monomials(u, degree_);
  }
  return tape.matmul(blocks, features);
}

ad::Var OperatorModel::step(ad::Tape& tape, ad::Var theta, Eigen::Index offset, ad::Var u,
                            const std::vector<Eigen::Index>& index, ad::Var psi) const {
  require_dims(tape.value(psi).rows() == d_, "step: lift dimension mismatch");
  const Eigen::Index batch = tape.value(psi).cols();
  require_dims(index.empty() ? tape.value(u).cols() == batch : static_cast<Eigen::Index>(index.size()) == batch,
               "step: parameter/lift column mismatch");
  if (variant_ == Variant::Affine) {
    const ad::Var a = tape.reshape_block(theta, offset, d_, d_);
    const ad::Var b = tape.reshape_block(theta, offset + d_ * d_, d_, n_u_);
    const ad::Var ub = index.empty() ? u : tape.gather_cols(u, index);
    return tape.add(tape.matmul(a, psi), tape.matmul(b, ub));
  }
  ad::Var k = k_columns(tape, theta, offset, u);
  if (!index.empty()) k = tape.gather_cols(k, index);
  return tape.batched_matvec(k, psi);
}

}  // namespace pk::koop
