#include "pk/autodiff.hpp"

#include "pk/error.hpp"
#include "pk/kernels.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace pk {

std::vector<std::vector<int>> monomial_exponents(int n_vars, int max_degree) {
  std::vector<std::vector<int>> out;
  if (n_vars < 0 || max_degree < 0) throw DimensionError("monomial_exponents: negative size");
  std::vector<int> e(static_cast<std::size_t>(n_vars), 0);
  // Lexicographically decreasing tuples summing to `deg`: x1^deg first.
  auto recurse = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == n_vars - 1) {
      e[static_cast<std::size_t>(pos)] = remaining;
      out.push_back(e);
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      e[static_cast<std::size_t>(pos)] = k;
      self(self, pos + 1, remaining - k);
    }
  };
  for (int deg = 0; deg <= max_degree; ++deg) {
    if (n_vars == 0) {
      if (deg == 0) out.push_back({});
      continue;
    }
    recurse(recurse, 0, deg);
  }
  return out;
}

Eigen::VectorXd monomial_features(const Eigen::Ref<const Eigen::VectorXd>& u,
                                  const std::vector<std::vector<int>>& exponents) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(exponents.size()));
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    double prod = 1.0;
    for (std::size_t i = 0; i < exponents[k].size(); ++i) {
      for (int p = 0; p < exponents[k][i]; ++p) prod *= u(static_cast<Eigen::Index>(i));
    }
    out(static_cast<Eigen::Index>(k)) = prod;
  }
  return out;
}

}  // namespace pk

namespace pk::ad {

namespace {

void check_shape(bool ok, const char* op) {
  if (!ok) throw DimensionError(std::string("autodiff: shape mismatch in ") + op);
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::variable(Matrix value) {
  Node n;
  n.op = Op::Variable;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::reshape_block(Var src, Index offset, Index rows, Index cols) {
  const Matrix& s = value(src);
  check_shape(offset >= 0 && rows >= 0 && cols >= 0 && offset + rows * cols <= s.size(), "reshape_block");
  Node n;
  n.op = Op::ReshapeBlock;
  n.value = Eigen::Map<const Matrix>(s.data() + offset, rows, cols);
  n.a = src;
  n.i0 = offset;
  n.needs_grad = needs(src);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check_shape(value(a).cols() == value(b).rows(), "matmul");
  Node n;
  n.op = Op::MatMul;
  n.value.noalias() = value(a) * value(b);
  n.a = a;
  n.b = b;
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Var Tape::add_bias(Var x, Var bias) {
  check_shape(value(bias).cols() == 1 && value(bias).rows() == value(x).rows(), "add_bias");
  Node n;
  n.op = Op::AddBias;
  n.value = value(x);
  n.value.colwise() += value(bias).col(0);
  n.a = x;
  n.b = bias;
  n.needs_grad = needs(x) || needs(bias);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_shape(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add");
  Node n;
  n.op = Op::Add;
  n.value = value(a) + value(b);
  n.a = a;
  n.b = b;
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_shape(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub");
  Node n;
  n.op = Op::Sub;
  n.value = value(a) - value(b);
  n.a = a;
  n.b = b;
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::Scale;
  n.value = c * value(a);
  n.a = a;
  n.c = c;
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  Node n;
  n.op = Op::Tanh;
  n.value = value(x).array().tanh().matrix();
  n.a = x;
  n.needs_grad = needs(x);
  return push(std::move(n));
}

Var Tape::square(Var x) {
  Node n;
  n.op = Op::Square;
  n.value = value(x).array().square().matrix();
  n.a = x;
  n.needs_grad = needs(x);
  return push(std::move(n));
}

Var Tape::row_block(Var x, Index begin, Index count) {
  check_shape(begin >= 0 && count >= 0 && begin + count <= value(x).rows(), "row_block");
  Node n;
  n.op = Op::RowBlock;
  n.value = value(x).middleRows(begin, count);
  n.a = x;
  n.i0 = begin;
  n.needs_grad = needs(x);
  return push(std::move(n));
}

Var Tape::col_block(Var x, Index begin, Index count) {
  check_shape(begin >= 0 && count >= 0 && begin + count <= value(x).cols(), "col_block");
  Node n;
  n.op = Op::ColBlock;
  n.value = value(x).middleCols(begin, count);
  n.a = x;
  n.i0 = begin;
  n.needs_grad = needs(x);
  return push(std::move(n));
}

Var Tape::vcat(std::span<const Var> parts) {
  check_shape(!parts.empty(), "vcat");
  const Index cols = value(parts[0]).cols();
  Index rows = 0;
  bool any = false;
  for (Var p : parts) {
    check_shape(value(p).cols() == cols, "vcat");
    rows += value(p).rows();
    any = any || needs(p);
  }
  Node n;
  n.op = Op::VCat;
  n.value.resize(rows, cols);
  Index r = 0;
  for (Var p : parts) {
    n.value.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  n.parts.assign(parts.begin(), parts.end());
  n.needs_grad = any;
  return push(std::move(n));
}

Var Tape::gather_cols(Var x, std::vector<Index> index) {
  const Matrix& xv = value(x);
  Node n;
  n.op = Op::GatherCols;
  n.value.resize(xv.rows(), static_cast<Index>(index.size()));
  for (std::size_t j = 0; j < index.size(); ++j) {
    check_shape(index[j] >= 0 && index[j] < xv.cols(), "gather_cols");
    n.value.col(static_cast<Index>(j)) = xv.col(index[j]);
  }
  n.a = x;
  n.index = std::move(index);
  n.needs_grad = needs(x);
  return push(std::move(n));
}

Var Tape::batched_matvec(Var kflat, Var x) {
  const Matrix& k = value(kflat);
  const Matrix& xv = value(x);
  const Index d = xv.rows();
  check_shape(k.rows() == d * d && k.cols() == xv.cols(), "batched_matvec");
  Node n;
  n.op = Op::BatchedMatVec;
  n.value.resize(d, xv.cols());
  kernels::batched_matvec(k.data(), xv.data(), n.value.data(), static_cast<std::size_t>(d),
                          static_cast<std::size_t>(xv.cols()));
  n.a = kflat;
  n.b = x;
  n.needs_grad = needs(kflat) || needs(x);
  return push(std::move(n));
}

Var Tape::monomials(Var u, int max_degree) {
  const Matrix& uv = value(u);
  const int n_vars = static_cast<int>(uv.rows());
  const auto exps = monomial_exponents(n_vars, max_degree);
  Node n;
  n.op = Op::Monomials;
  n.value.resize(static_cast<Index>(exps.size()), uv.cols());
  for (Index j = 0; j < uv.cols(); ++j) n.value.col(j) = monomial_features(uv.col(j), exps);
  for (const auto& e : exps) n.index.insert(n.index.end(), e.begin(), e.end());
  n.a = u;
  n.i0 = n_vars;
  n.needs_grad = needs(u);
  return push(std::move(n));
}

Var Tape::sum_squares(Var x) {
  const Matrix& xv = value(x);
  Node n;
  n.op = Op::SumSquares;
  n.value.resize(1, 1);
  n.value(0, 0) = kernels::dot(xv.data(), xv.data(), static_cast<std::size_t>(xv.size()));
  n.a = x;
  n.needs_grad = needs(x);
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  Node n;
  n.op = Op::Sum;
  n.value.resize(1, 1);
  n.value(0, 0) = value(x).sum();
  n.a = x;
  n.needs_grad = needs(x);
  return push(std::move(n));
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw DimensionError("autodiff: backward root must be 1x1");
  for (Node& n : nodes_) {
    if (!n.value.allFinite()) throw NumericalError("autodiff: non-finite intermediate value");
    n.grad.resize(0, 0);
  }
  grad_ref(root)(0, 0) = 1.0;

  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.needs_grad) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::Variable:
      case Op::Constant:
        break;
      case Op::ReshapeBlock: {
        Matrix& ga = grad_ref(n.a);
        Eigen::Map<Matrix>(ga.data() + n.i0, g.rows(), g.cols()) += g;
        break;
      }
      case Op::MatMul:
        if (needs(n.a)) grad_ref(n.a).noalias() += g * value(n.b).transpose();
        if (needs(n.b)) grad_ref(n.b).noalias() += value(n.a).transpose() * g;
        break;
      case Op::AddBias:
        if (needs(n.a)) grad_ref(n.a) += g;
        if (needs(n.b)) grad_ref(n.b).col(0) += g.rowwise().sum();
        break;
      case Op::Add:
        if (needs(n.a)) grad_ref(n.a) += g;
        if (needs(n.b)) grad_ref(n.b) += g;
        break;
      case Op::Sub:
        if (needs(n.a)) grad_ref(n.a) += g;
        if (needs(n.b)) grad_ref(n.b) -= g;
        break;
      case Op::Scale:
        grad_ref(n.a) += n.c * g;
        break;
      case Op::Tanh:
        grad_ref(n.a).array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::Square:
        grad_ref(n.a).array() += 2.0 * g.array() * value(n.a).array();
        break;
      case Op::RowBlock:
        grad_ref(n.a).middleRows(n.i0, g.rows()) += g;
        break;
      case Op::ColBlock:
        grad_ref(n.a).middleCols(n.i0, g.cols()) += g;
        break;
      case Op::VCat: {
        Index r = 0;
        for (Var p : n.parts) {
          const Index rows = value(p).rows();
          if (needs(p)) grad_ref(p) += g.middleRows(r, rows);
          r += rows;
        }
        break;
      }
      case Op::GatherCols: {
        Matrix& ga = grad_ref(n.a);
        for (std::size_t j = 0; j < n.index.size(); ++j) ga.col(n.index[j]) += g.col(static_cast<Index>(j));
        break;
      }
      case Op::BatchedMatVec: {
        const Matrix& k = value(n.a);
        const Matrix& x = value(n.b);
        double* gk = needs(n.a) ? grad_ref(n.a).data() : nullptr;
        double* gx = needs(n.b) ? grad_ref(n.b).data() : nullptr;
        kernels::batched_matvec_backward(k.data(), x.data(), g.data(), gk, gx, static_cast<std::size_t>(x.rows()),
                                         static_cast<std::size_t>(x.cols()));
        break;
      }
      case Op::Monomials: {
        const Matrix& u = value(n.a);
        Matrix& gu = grad_ref(n.a);
        const auto n_vars = static_cast<std::size_t>(n.i0);
        const auto n_mono = static_cast<std::size_t>(n.value.rows());
        for (Index j = 0; j < u.cols(); ++j) {
          for (std::size_t k = 0; k < n_mono; ++k) {
            const Index* e = n.index.data() + k * n_vars;
            for (std::size_t i = 0; i < n_vars; ++i) {
              if (e[i] == 0) continue;
              double deriv = static_cast<double>(e[i]);
              for (std::size_t l = 0; l < n_vars; ++l) {
                const Index p = (l == i) ? e[l] - 1 : e[l];
                for (Index q = 0; q < p; ++q) deriv *= u(static_cast<Index>(l), j);
              }
              gu(static_cast<Index>(i), j) += g(static_cast<Index>(k), j) * deriv;
            }
          }
        }
        break;
      }
      case Op::SumSquares:
        grad_ref(n.a) += (2.0 * g(0, 0)) * value(n.a);
        break;
      case Op::Sum:
        grad_ref(n.a).array() += g(0, 0);
        break;
    }
  }

  for (const Node& n : nodes_) {
    if (n.grad.size() != 0 && !n.grad.allFinite()) throw NumericalError("autodiff: non-finite adjoint");
  }
}

}  // namespace pk::ad
