#include "doctest.h"

#include "oracles.hpp"
#include "pk/dictionary.hpp"
#include "pk/error.hpp"
#include "pk/koopman.hpp"
#include "pk/linalg.hpp"

#include <cmath>
#include <random>

using pk::dict::Dictionary;
using pk::dict::Observable;
using pk::koop::OperatorModel;

namespace {

// Normal-equation solution in extended precision from the double Gram and cross terms.
Eigen::MatrixXd ridge_oracle(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, double lambda) {
  using Ext = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::MatrixXd g = z * z.transpose() + lambda * Eigen::MatrixXd::Identity(z.rows(), z.rows());
  const Eigen::MatrixXd c = y * z.transpose();
  const Ext w = g.cast<long double>().fullPivLu().solve(Ext(c.cast<long double>().transpose())).transpose();
  return w.cast<double>();
}

}  // namespace

TEST_CASE("ridge solve matches a dense normal-equation oracle") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd z(4, 30), y(3, 30);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n01(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = n01(rng);
  const double lambda = 0.37;
  const Eigen::MatrixXd oracle = ridge_oracle(z, y, lambda);
  CHECK((pk::linalg::ridge_solve(z, y, lambda) - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ridge solve on a duplicated sample uses the regularizer") {
  Eigen::MatrixXd z(2, 5), y(2, 5);
  for (int j = 0; j < 5; ++j) {
    z.col(j) << 1.0, 0.5;
    y.col(j) << 1.0, 0.45;
  }
  const double lambda = 1e-6;
  const Eigen::MatrixXd oracle = ridge_oracle(z, y, lambda);
  pk::linalg::RidgeInfo info;
  const Eigen::MatrixXd w = pk::linalg::ridge_solve(z, y, lambda, &info);
  CHECK((w - oracle).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(pk::linalg::ridge_solve(z, y, 0.0), pk::NumericalError);
}

TEST_CASE("ridge solve recovers an exact linear map") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd w_true(3, 3), z(3, 50);
  for (Eigen::Index i = 0; i < 9; ++i) w_true(i) = u(rng);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = u(rng);
  CHECK((pk::linalg::ridge_solve(z, w_true * z, 0.0) - w_true).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dictionary prefix is exact for any network parameters") {
  auto d = Dictionary::network(Observable::Identity, 2, 25, {16, 16}, 4);
  CHECK(d.n_psi() == 25);
  CHECK(d.tail_dim() == 22);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (Eigen::Index i = 0; i < d.params().size(); ++i) d.params()(i) = u(rng);
  Eigen::MatrixXd x(2, 10000);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(rng);
  const Eigen::MatrixXd psi = d.evaluate_batch(x);
  CHECK((psi.row(0).array() == 1.0).all());
  CHECK(psi.middleRows(1, 2) == x);
  const auto one = d.evaluate(Eigen::Vector2d(0.5, -1.0));
  CHECK(one(0) == 1.0);
  CHECK(one(1) == 0.5);
  CHECK(one(2) == -1.0);
  // Batched products may associate differently from the single-column path.
  CHECK((d.evaluate_batch(x.leftCols(1)).col(0) - psi.col(0)).cwiseAbs().maxCoeff() < 1e-13);
  // Permuting inputs permutes columns.
  Eigen::MatrixXd swapped(2, 2);
  swapped << x.col(7), x.col(3);
  const Eigen::MatrixXd ps = d.evaluate_batch(swapped);
  CHECK((ps.col(0) - psi.col(7)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((ps.col(1) - psi.col(3)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK_THROWS_AS(d.evaluate(Eigen::Vector3d(1, 2, 3)), pk::DimensionError);
}

TEST_CASE("tape lift equals plain evaluation and the prefix carries no gradient") {
  const auto d = Dictionary::network(Observable::Identity, 3, 9, {8, 8}, 2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 6);
  pk::ad::Tape tape;
  const auto theta = tape.variable(d.params());
  const auto psi = d.lift(tape, theta, 0, x);
  CHECK(tape.value(psi) == d.evaluate_batch(x));
  const auto g = pk::nn::gradient(
      [&](pk::ad::Tape& t, pk::ad::Var v) { return t.sum_squares(t.row_block(d.lift(t, v, 0, x), 0, 4)); },
      d.params());
  CHECK(g.isZero(0.0));
}

TEST_CASE("kdv dictionary uses mass and momentum") {
  const auto d = Dictionary::network(Observable::MassMomentum, 64, 6, {16, 16}, 1);
  CHECK(d.n_obs() == 2);
  CHECK(d.tail_dim() == 3);
  const Eigen::VectorXd eta = Eigen::VectorXd::Constant(64, 0.2);
  const auto psi = d.evaluate(eta);
  CHECK(psi(1) == doctest::Approx(0.4 * M_PI).epsilon(1e-14));
  CHECK(psi(2) == doctest::Approx(0.08 * M_PI).epsilon(1e-14));
  const auto b = pk::dict::selector_rows(2, 6, {0});
  CHECK(b.rows() == 1);
  CHECK(b(0, 1) == 1.0);
  CHECK(b.sum() == 1.0);
}

TEST_CASE("rbf dictionary tail") {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, 1);
  const auto d = Dictionary::rbf_from(Observable::Identity, c, 1.0);
  const auto psi = d.evaluate(Eigen::VectorXd::Ones(1));
  REQUIRE(psi.size() == 3);
  CHECK(psi(2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

  const Eigen::MatrixXd data = Eigen::MatrixXd::Random(2, 200);
  const auto r = Dictionary::rbf(Observable::Identity, data, 20, 7);
  CHECK(r.n_psi() == 23);
  const Eigen::VectorXd lo = data.rowwise().minCoeff(), hi = data.rowwise().maxCoeff();
  for (Eigen::Index k = 0; k < 20; ++k) {
    CHECK((r.centers().col(k).array() >= lo.array()).all());
    CHECK((r.centers().col(k).array() <= hi.array()).all());
  }
  std::vector<double> dist;
  for (Eigen::Index a = 0; a < 20; ++a) {
    for (Eigen::Index b = a + 1; b < 20; ++b) dist.push_back((r.centers().col(a) - r.centers().col(b)).norm());
  }
  std::sort(dist.begin(), dist.end());
  const double median = 0.5 * (dist[dist.size() / 2 - 1] + dist[dist.size() / 2]);
  CHECK(r.gamma() == doctest::Approx(1.0 / (2.0 * median * median)).epsilon(1e-14));
  CHECK(Dictionary::rbf(Observable::Identity, data, 20, 7).centers() == r.centers());
}

TEST_CASE("selector") {
  const auto b = pk::dict::selector(2, 25);
  CHECK(b.rows() == 2);
  CHECK(b.cols() == 25);
  CHECK(b(0, 1) == 1.0);
  CHECK(b(1, 2) == 1.0);
  CHECK(b.sum() == 2.0);
  Eigen::MatrixXd expect(2, 3);
  expect << 0, 1, 0, 0, 0, 1;
  CHECK(pk::dict::selector(2, 3) == expect);
  CHECK_THROWS_AS(pk::dict::selector(2, 2), pk::DimensionError);
}

TEST_CASE("scaler maps the data box onto [-1, 1]") {
  Eigen::MatrixXd x(2, 3);
  x << 0, 2, 4, -1, -1, 3;
  const auto s = pk::dict::Scaler::fit(x);
  const Eigen::MatrixXd z = s.apply(x);
  CHECK(z.row(0).minCoeff() == -1.0);
  CHECK(z.row(0).maxCoeff() == 1.0);
  CHECK(z.row(1).minCoeff() == -1.0);
  CHECK(z.row(1).maxCoeff() == 1.0);
}

TEST_CASE("network operator has a fixed first row") {
  auto m = OperatorModel::network(5, 3, {16}, 9);
  m.params() = pk::nn::init_params(m.net_spec(), 9);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0.0;
  Eigen::RowVectorXd e1 = Eigen::RowVectorXd::Zero(5);
  e1(0) = 1.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    worst = std::max(worst, (m.k_matrix(p).row(0) - e1).cwiseAbs().maxCoeff());
  }
  CHECK(worst == 0.0);
  m.params().setZero();
  const auto k = m.k_matrix(Eigen::Vector3d(0.3, 0.1, -0.2));
  CHECK(k.row(0) == e1);
  CHECK(k.bottomRows(4).isZero(0.0));
  Eigen::VectorXd psi = Eigen::VectorXd::Random(5);
  psi(0) = 1.0;
  CHECK(OperatorModel::network(5, 3, {16}, 2).apply(Eigen::Vector3d(0.9, -0.9, 0.1), psi)(0) == 1.0);
  const auto gen = OperatorModel::network(5, 3, {16}, 2).generator(Eigen::Vector3d(0.5, 0.5, 0.5), 0.01);
  CHECK(gen.row(0).isZero(0.0));
}

TEST_CASE("network operator can start at the identity") {
  for (bool fixed : {true, false}) {
    const auto m = OperatorModel::network(4, 2, {8, 8}, 3, fixed, true);
    CHECK(m.k_matrix(Eigen::Vector2d(0.7, -0.2)) == Eigen::MatrixXd::Identity(4, 4));
    CHECK(m.params().head(m.param_count() - 16 + (fixed ? 4 : 0)).cwiseAbs().maxCoeff() > 0.0);
    const auto glorot = OperatorModel::network(4, 2, {8, 8}, 3, fixed);
    CHECK(glorot.params() == pk::nn::init_params(glorot.net_spec(), 3));
  }
}

TEST_CASE("network operator reshapes row-major") {
  auto m = OperatorModel::network(2, 1, {3}, 1, false);
  m.params().setZero();
  const auto slots = pk::nn::layout(m.net_spec());
  // Output bias carries the flat K.
  for (int i = 0; i < 4; ++i) m.params()(slots.back().bias_offset + i) = i + 1.0;
  Eigen::Matrix2d expect;
  expect << 1, 2, 3, 4;
  CHECK(m.k_matrix(Eigen::VectorXd::Zero(1)) == expect);
}

TEST_CASE("poly operator sums monomial blocks") {
  auto m = OperatorModel::poly(2, 1, 3);
  REQUIRE(m.n_blocks() == 4);
  std::vector<Eigen::Matrix2d> k(4);
  for (int i = 0; i < 4; ++i) {
    k[static_cast<std::size_t>(i)] = Eigen::Matrix2d::Random();
    Eigen::Matrix<double, 2, 2, Eigen::RowMajor> rm = k[static_cast<std::size_t>(i)];
    m.params().segment(4 * i, 4) = Eigen::Map<Eigen::Vector4d>(rm.data());
  }
  const Eigen::MatrixXd got = m.k_matrix(Eigen::VectorXd::Constant(1, 2.0));
  CHECK((got - (k[0] + 2 * k[1] + 4 * k[2] + 8 * k[3])).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(OperatorModel::poly(3, 3, 3).n_blocks() == 20);
  const auto f = pk::monomial_features(Eigen::VectorXd::Constant(1, 2.0), pk::monomial_exponents(1, 3));
  CHECK(f == Eigen::Vector4d(1, 2, 4, 8));
  const auto z = pk::monomial_features(Eigen::Vector3d::Zero(), pk::monomial_exponents(3, 3));
  CHECK(z(0) == 1.0);
  CHECK(z.tail(19).isZero(0.0));
}

TEST_CASE("bilinear and constant operators") {
  auto m = OperatorModel::bilinear(2, 1);
  // A = I, B_1 = e2 e1^T, row-major blocks.
  m.params() << 1, 0, 0, 1, 0, 0, 1, 0;
  Eigen::Matrix2d expect;
  expect << 1, 0, 0.5, 1;
  CHECK(m.k_matrix(Eigen::VectorXd::Constant(1, 0.5)) == expect);
  CHECK(m.k_matrix(Eigen::VectorXd::Zero(1)) == Eigen::Matrix2d::Identity());

  auto c = OperatorModel::constant(3, 2);
  c.params() << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const Eigen::Vector3d psi(0.3, -1, 2);
  CHECK(c.apply(Eigen::Vector2d(4, 5), psi) == psi);
  CHECK(c.generator(Eigen::Vector2d(4, 5), 0.1).isZero(0.0));
}

TEST_CASE("affine operator") {
  auto m = OperatorModel::affine(3, 3);
  m.params().setZero();
  m.params().tail(9) << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const Eigen::Vector3d u(3, -1, 2);
  CHECK(m.apply(u, Eigen::Vector3d(7, 8, 9)) == u);
  CHECK_THROWS_AS(m.k_matrix(u), pk::DimensionError);
}

TEST_CASE("generator recovers a matrix logarithm to first order") {
  Eigen::Matrix2d l;
  l << 0, 1, -1, 0;
  const double dt = 1e-3;
  const Eigen::MatrixXd k = pk::testing::expm_taylor(dt * l);
  auto m = OperatorModel::constant(2, 1);
  Eigen::Matrix<double, 2, 2, Eigen::RowMajor> rm = k;
  m.params() = Eigen::Map<Eigen::Vector4d>(rm.data());
  CHECK((m.generator(Eigen::VectorXd::Zero(1), dt) - l).norm() < 1e-3);

  // K = I + dt L with dt a power of two makes the round trip exact.
  Eigen::Matrix<double, 2, 2, Eigen::RowMajor> exact = Eigen::Matrix2d::Identity() + 0.125 * l;
  m.params() = Eigen::Map<Eigen::Vector4d>(exact.data());
  CHECK(m.generator(Eigen::VectorXd::Zero(1), 0.125) == l);
}

TEST_CASE("tape step matches plain apply for every variant") {
  const Eigen::Index d = 4, nu = 2;
  std::vector<OperatorModel> models{OperatorModel::constant(d, nu), OperatorModel::affine(d, nu),
                                    OperatorModel::bilinear(d, nu), OperatorModel::poly(d, nu, 3),
                                    OperatorModel::network(d, nu, {8, 8}, 5)};
  const Eigen::MatrixXd u = Eigen::MatrixXd::Random(nu, 3);
  const Eigen::MatrixXd psi = Eigen::MatrixXd::Random(d, 5);
  const std::vector<Eigen::Index> index{0, 2, 1, 1, 0};
  for (auto& m : models) {
    m.params() = m.variant() == pk::koop::Variant::Network ? pk::nn::init_params(m.net_spec(), 5)
                                                           : Eigen::VectorXd(Eigen::VectorXd::Random(m.param_count()));
    pk::ad::Tape tape;
    const auto theta = tape.variable(m.params());
    const auto out = m.step(tape, theta, 0, tape.constant(u), index, tape.constant(psi));
    for (Eigen::Index j = 0; j < 5; ++j) {
      const Eigen::VectorXd expect = m.apply(u.col(index[static_cast<std::size_t>(j)]), psi.col(j));
      CHECK((tape.value(out).col(j) - expect).cwiseAbs().maxCoeff() < 1e-13);
    }
    // Gradient check on the operator parameters.
    auto loss = [&](pk::ad::Tape& t, pk::ad::Var v) {
      return t.sum_squares(m.step(t, v, 0, t.constant(u), index, t.constant(psi)));
    };
    const Eigen::VectorXd g = pk::nn::gradient(loss, m.params());
    auto plain = [&](const Eigen::VectorXd& v) {
      pk::ad::Tape t;
      return t.scalar(loss(t, t.constant(v)));
    };
    std::vector<Eigen::Index> coords;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(m.param_count(), 40); ++i) coords.push_back(i);
    const auto fd = pk::testing::central_differences(plain, m.params(), coords);
    std::vector<double> analytic;
    for (auto c : coords) analytic.push_back(g(c));
    CHECK(pk::testing::relative_error(analytic, fd) < 1e-6);
  }
}
