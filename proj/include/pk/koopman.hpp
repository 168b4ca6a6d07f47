#pragma once
// Parametric lifted evolution models u -> K(u).
//
// Parameter layouts inside the flat theta (d = n_psi):
//   Constant  K as a row-major d*d block
//   Affine    A column-major d x d, then B_u column-major d x n_u
//   Bilinear  A, B_1 .. B_nu, each a row-major d*d block (K(u) = A + sum u_i B_i)
//   Poly      K_1 .. K_m row-major d*d blocks, one per monomial h_i(u) of degree <= max_degree
//   Network   tanh network u -> rows of K, reshaped row-major. With the fixed
//             first row the network emits rows 2..d and row 1 is (1, 0, ..., 0).

#include "pk/autodiff.hpp"
#include "pk/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace pk::koop {

enum class Variant { Constant, Affine, Bilinear, Poly, Network };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

class OperatorModel {
 public:
  OperatorModel() = default;

  static OperatorModel constant(Eigen::Index d, Eigen::Index n_u);
  static OperatorModel affine(Eigen::Index d, Eigen::Index n_u);
  static OperatorModel bilinear(Eigen::Index d, Eigen::Index n_u);
  static OperatorModel poly(Eigen::Index d, Eigen::Index n_u, int max_degree);
  /// Network operator with Glorot-initialized weights and zero biases. With
  /// `identity_start` the output layer starts at zero weights and the flat
  /// identity as bias, so K(u) = I before training. The last hidden width plus
  /// one bounds the rank of the generator samples.
  static OperatorModel network(Eigen::Index d, Eigen::Index n_u, std::vector<Eigen::Index> hidden_widths,
                               std::uint64_t seed, bool fixed_first_row = true, bool identity_start = false);

  Variant variant() const { return variant_; }
  Eigen::Index dim() const { return d_; }
  Eigen::Index n_u() const { return n_u_; }
  int max_degree() const { return degree_; }
  bool fixed_first_row() const { return fixed_first_row_; }
  bool has_matrix_form() const { return variant_ != Variant::Affine; }
  const nn::NetworkSpec& net_spec() const { return spec_; }
  /// Number of monomial features (Poly) or 1 + n_u (Bilinear) or 1 (Constant).
  Eigen::Index n_blocks() const;

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::Index param_count() const;

  /// K(u). Throws DimensionError for the affine variant.
  Eigen::MatrixXd k_matrix(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  /// K(u) psi, or A psi + B_u u for the affine variant.
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& psi) const;
  /// (K(u) - I) / dt.
  Eigen::MatrixXd generator(const Eigen::Ref<const Eigen::VectorXd>& u, double dt) const;

  /// Affine blocks (affine variant only).
  Eigen::MatrixXd a_matrix() const;
  Eigen::MatrixXd b_matrix() const;

  /// Records one lifted step on `tape`: column j of the result is
  /// K(u[:, index[j]]) psi[:, j]. `u` holds the distinct parameter columns;
  /// an empty `index` means index[j] = j. theta[offset, offset + param_count())
  /// holds this model's parameters.
  ad::Var step(ad::Tape& tape, ad::Var theta, Eigen::Index offset, ad::Var u, const std::vector<Eigen::Index>& index,
               ad::Var psi) const;

  /// Row-major K(u_j) for each column of `u` (d*d x columns). Matrix-form variants only.
  ad::Var k_columns(ad::Tape& tape, ad::Var theta, Eigen::Index offset, ad::Var u) const;

 private:
  Variant variant_ = Variant::Constant;
  Eigen::Index d_ = 0;
  Eigen::Index n_u_ = 0;
  int degree_ = 0;
  bool fixed_first_row_ = true;
  nn::NetworkSpec spec_;
  Eigen::VectorXd params_;
};

}  // namespace pk::koop
