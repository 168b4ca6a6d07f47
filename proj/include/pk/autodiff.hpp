#pragma once
// Batch-level reverse-mode differentiation over a fixed primitive set.
//
// Values are dense matrices; by convention rows are features and columns are
// batch samples. A Tape records every primitive applied; `backward` then
// propagates adjoints from a 1x1 root back to every node. Only the primitives
// needed by the lifted-dynamics losses and tracking costs are provided.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace pk {

/// Exponent tuples of all monomials in `n_vars` variables with total degree
/// <= `max_degree`, graded (by total degree) then lexicographic, constant first.
std::vector<std::vector<int>> monomial_exponents(int n_vars, int max_degree);

/// Evaluates the monomials described by `exponents` at `u`.
Eigen::VectorXd monomial_features(const Eigen::Ref<const Eigen::VectorXd>& u,
                                  const std::vector<std::vector<int>>& exponents);

}  // namespace pk

namespace pk::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  Tape() = default;

  /// Leaf whose gradient is reported after backward().
  Var variable(Matrix value);
  /// Leaf treated as a constant (no gradient is kept).
  Var constant(Matrix value);

  /// View `rows*cols` consecutive entries of `src` (column-major flattening)
  /// starting at `offset` as a rows x cols matrix.
  Var reshape_block(Var src, Index offset, Index rows, Index cols);
  Var matmul(Var a, Var b);
  /// x + bias * 1^T, bias a column vector.
  Var add_bias(Var x, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var tanh(Var x);
  Var square(Var x);
  Var row_block(Var x, Index begin, Index count);
  Var col_block(Var x, Index begin, Index count);
  Var vcat(std::span<const Var> parts);
  /// out[:, j] = x[:, index[j]]
  Var gather_cols(Var x, std::vector<Index> index);
  /// Column j of `kflat` holds a row-major d x d matrix K_j; out[:, j] = K_j x[:, j].
  Var batched_matvec(Var kflat, Var x);
  /// Column-wise monomial features of `u` (see monomial_exponents).
  Var monomials(Var u, int max_degree);
  /// Sum of squared entries, 1x1.
  Var sum_squares(Var x);
  Var sum(Var x);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }

  /// Reverse sweep from a 1x1 node. Throws NumericalError when any recorded
  /// value or adjoint is non-finite.
  void backward(Var root);

  /// Adjoint of a node after backward(); zero-sized if the node received none.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    Variable,
    Constant,
    ReshapeBlock,
    MatMul,
    AddBias,
    Add,
    Sub,
    Scale,
    Tanh,
    Square,
    RowBlock,
    ColBlock,
    VCat,
    GatherCols,
    BatchedMatVec,
    Monomials,
    SumSquares,
    Sum,
  };

  struct Node {
    Op op = Op::Constant;
    Matrix value;
    Matrix grad;
    Var a{}, b{};
    bool needs_grad = false;
    Index i0 = 0, i1 = 0, i2 = 0;
    double c = 0.0;
    std::vector<Var> parts;
    std::vector<Index> index;
  };

  Var push(Node node);
  Matrix& grad_ref(Var v);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }

  std::vector<Node> nodes_;
};

}  // namespace pk::ad
