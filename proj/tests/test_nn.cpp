#include "doctest.h"

#include "oracles.hpp"
#include "pk/error.hpp"
#include "pk/nn.hpp"

#include <cmath>
#include <limits>
#include <random>

using pk::nn::NetworkSpec;

TEST_CASE("init_params respects the Glorot bound and zero biases") {
  NetworkSpec spec{100, {100}, 100, pk::nn::Activation::Tanh, false};
  const auto p = pk::nn::init_params(spec, 42);
  const double bound = std::sqrt(0.03);
  for (const auto& slot : pk::nn::layout(spec)) {
    for (Eigen::Index i = 0; i < slot.fan_in * slot.fan_out; ++i) {
      CHECK(std::abs(p(slot.weight_offset + i)) <= bound);
    }
    for (Eigen::Index i = 0; i < slot.fan_out; ++i) CHECK(p(slot.bias_offset + i) == 0.0);
  }
  CHECK(pk::nn::init_params(spec, 42) == p);
  CHECK(pk::nn::init_params(spec, 43) != p);
}

TEST_CASE("init_params on a 1x1 affine net") {
  NetworkSpec spec{1, {}, 1, pk::nn::Activation::Tanh, false};
  const auto p = pk::nn::init_params(spec, 3);
  REQUIRE(p.size() == 2);
  CHECK(std::abs(p(0)) <= std::sqrt(3.0));
  CHECK(p(1) == 0.0);
}

TEST_CASE("init_params: empirical max stays under the bound for every layer") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkSpec spec{1 + static_cast<Eigen::Index>(rng() % 40), {1 + static_cast<Eigen::Index>(rng() % 64)},
                     1 + static_cast<Eigen::Index>(rng() % 30), pk::nn::Activation::Tanh, trial % 2 == 0};
    const auto p = pk::nn::init_params(spec, rng());
    for (const auto& slot : pk::nn::layout(spec)) {
      const double bound = pk::nn::glorot_bound(slot.fan_in, slot.fan_out);
      CHECK(p.segment(slot.weight_offset, slot.fan_in * slot.fan_out).cwiseAbs().maxCoeff() <= bound);
    }
  }
}

TEST_CASE("forward: zero parameters give a zero output") {
  NetworkSpec spec{3, {8, 8}, 4, pk::nn::Activation::Tanh, true};
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(pk::nn::parameter_count(spec));
  const Eigen::VectorXd out = pk::nn::forward(spec, p, Eigen::Vector3d(0.3, -2.0, 5.0));
  CHECK(out.size() == 4);
  CHECK(out.isZero(0.0));
}

TEST_CASE("forward: 1x1x1 net evaluated by hand") {
  NetworkSpec spec{1, {1}, 1, pk::nn::Activation::Tanh, false};
  Eigen::VectorXd p(4);
  p << 0.7, 0.3, -1.5, 0.25;  // w1, b1, w2, b2
  const Eigen::VectorXd out = pk::nn::forward(spec, p, Eigen::VectorXd::Zero(1));
  CHECK(out(0) == doctest::Approx(-0.18696891867738635).epsilon(1e-15));
}

TEST_CASE("forward: residual net with zero hidden weights passes the input through the skip path") {
  NetworkSpec spec{4, {4, 4}, 2, pk::nn::Activation::Tanh, true};
  Eigen::VectorXd p = Eigen::VectorXd::Zero(pk::nn::parameter_count(spec));
  const auto slots = pk::nn::layout(spec);
  CHECK(slots[0].skip);
  CHECK(slots[1].skip);
  CHECK(!slots[2].skip);
  Eigen::MatrixXd w_out(2, 4);
  w_out << 1, 2, 3, 4, -1, 0, 0.5, 0;
  Eigen::Map<Eigen::MatrixXd>(p.data() + slots[2].weight_offset, 2, 4) = w_out;
  p(slots[2].bias_offset) = 0.1;
  const Eigen::Vector4d x(0.5, -1.0, 2.0, 0.25);
  const Eigen::VectorXd out = pk::nn::forward(spec, p, x);
  const Eigen::Vector2d expect = w_out * x + Eigen::Vector2d(0.1, 0.0);
  CHECK((out - expect).norm() < 1e-15);
}

TEST_CASE("forward rejects a mismatched input") {
  NetworkSpec spec{3, {5}, 2, pk::nn::Activation::Tanh, false};
  const auto p = pk::nn::init_params(spec, 1);
  CHECK_THROWS_AS(pk::nn::forward(spec, p, Eigen::VectorXd::Zero(2)), pk::DimensionError);
}

TEST_CASE("tape forward is bit-identical to the plain forward") {
  NetworkSpec spec{5, {16, 16}, 3, pk::nn::Activation::Tanh, true};
  const auto p = pk::nn::init_params(spec, 9);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 7);
  pk::ad::Tape tape;
  const auto pv = tape.variable(p);
  const auto out = pk::nn::forward(tape, spec, pv, 0, tape.constant(x));
  CHECK(tape.value(out) == pk::nn::forward_batch(spec, p, x));
}

TEST_CASE("gradient of the squared norm is twice the parameters") {
  const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(9, -2.0, 2.0);
  const auto g = pk::nn::gradient([](pk::ad::Tape& t, pk::ad::Var v) { return t.sum_squares(v); }, p);
  CHECK((g - 2.0 * p).norm() == 0.0);
}

TEST_CASE("gradient of an unused parameter block is exactly zero") {
  NetworkSpec spec{2, {6}, 2, pk::nn::Activation::Tanh, false};
  const auto n = pk::nn::parameter_count(spec);
  Eigen::VectorXd p(2 * n);
  p << pk::nn::init_params(spec, 1), pk::nn::init_params(spec, 2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5);
  const auto g = pk::nn::gradient(
      [&](pk::ad::Tape& t, pk::ad::Var v) {
        return t.sum_squares(pk::nn::forward(t, spec, v, 0, t.constant(x)));
      },
      p);
  CHECK(g.tail(n).isZero(0.0));
  CHECK(g.head(n).norm() > 0.0);
}

TEST_CASE("gradient agrees with central differences on random networks") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    NetworkSpec spec;
    spec.input_dim = 1 + static_cast<Eigen::Index>(rng() % 6);
    const int depth = 1 + static_cast<int>(rng() % 3);
    const Eigen::Index width = 4 + static_cast<Eigen::Index>(rng() % 60);
    spec.hidden_widths.assign(static_cast<std::size_t>(depth), width);
    spec.output_dim = 1 + static_cast<Eigen::Index>(rng() % 5);
    spec.residual = trial % 2 == 1;
    const Eigen::VectorXd p = pk::nn::init_params(spec, rng());
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(spec.input_dim, 3);
    const Eigen::MatrixXd target = Eigen::MatrixXd::Random(spec.output_dim, 3);
    auto build = [&](pk::ad::Tape& t, pk::ad::Var v) {
      return t.sum_squares(t.sub(pk::nn::forward(t, spec, v, 0, t.constant(x)), t.constant(target)));
    };
    auto plain = [&](const Eigen::VectorXd& v) {
      return (pk::nn::forward_batch(spec, v, x) - target).squaredNorm();
    };
    const Eigen::VectorXd g = pk::nn::gradient(build, p);
    std::vector<Eigen::Index> coords;
    for (int k = 0; k < 30; ++k) coords.push_back(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p.size())));
    std::vector<double> analytic;
    for (auto c : coords) analytic.push_back(g(c));
    const auto fd = pk::testing::central_differences(plain, p, coords);
    CHECK(pk::testing::relative_error(analytic, fd) < 1e-4);
  }
}

TEST_CASE("tape primitives: monomials, gather and batched matvec gradients") {
  const Eigen::Index d = 3, batch = 4;
  const Eigen::VectorXd p = Eigen::VectorXd::Random(d * d * 2 + 2 * 2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(d, batch);
  auto build = [&](pk::ad::Tape& t, pk::ad::Var v) {
    const auto kflat = t.reshape_block(v, 0, d * d, 2);
    const auto u = t.reshape_block(v, d * d * 2, 2, 2);
    const auto mono = t.monomials(u, 3);
    const auto gathered = t.gather_cols(kflat, {0, 1, 1, 0});
    const auto y = t.batched_matvec(gathered, t.constant(x));
    const auto rows = t.row_block(y, 1, 2);
    const auto cols = t.col_block(y, 0, 2);
    const std::vector<pk::ad::Var> parts{rows, rows};
    return t.add(t.add(t.sum_squares(t.tanh(y)), t.sum(t.square(mono))),
                 t.add(t.scale(t.sum(t.vcat(parts)), 0.3), t.sum_squares(cols)));
  };
  const Eigen::VectorXd g = pk::nn::gradient(build, p);
  auto plain = [&](const Eigen::VectorXd& v) {
    pk::ad::Tape t;
    return t.scalar(build(t, t.constant(v)));
  };
  std::vector<Eigen::Index> coords;
  for (Eigen::Index i = 0; i < p.size(); ++i) coords.push_back(i);
  const auto fd = pk::testing::central_differences(plain, p, coords);
  const std::vector<double> analytic(g.data(), g.data() + g.size());
  CHECK(pk::testing::relative_error(analytic, fd) < 1e-7);
}

TEST_CASE("monomial ordering is graded lexicographic with the constant first") {
  const auto e = pk::monomial_exponents(2, 2);
  REQUIRE(e.size() == 6);
  CHECK(e[0] == std::vector<int>{0, 0});
  CHECK(e[1] == std::vector<int>{1, 0});
  CHECK(e[2] == std::vector<int>{0, 1});
  CHECK(e[3] == std::vector<int>{2, 0});
  CHECK(e[4] == std::vector<int>{1, 1});
  CHECK(e[5] == std::vector<int>{0, 2});
  CHECK(pk::monomial_exponents(3, 3).size() == 20);
}

TEST_CASE("backward rejects non-finite intermediates") {
  Eigen::VectorXd p(2);
  p << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(pk::nn::gradient([](pk::ad::Tape& t, pk::ad::Var v) { return t.sum_squares(v); }, p),
                  pk::NumericalError);
}
