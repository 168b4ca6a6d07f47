#include "doctest.h"

#include "pk/checkpoint.hpp"
#include "pk/error.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using pk::dict::Dictionary;
using pk::dict::Observable;
using pk::koop::OperatorModel;
namespace ckpt = pk::ckpt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pk_test_" + name)).string();
}

void randomize(Eigen::VectorXd& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& v : p) v = g(rng);
}

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("checkpoints reload every model variant bit for bit") {
  const auto sys = pk::dyn::System(pk::dyn::Vdpm{});
  Eigen::MatrixXd data = Eigen::MatrixXd::Random(2, 40);

  std::vector<Dictionary> dicts{Dictionary::network(Observable::Identity, 2, 7, {8, 8}, 3),
                                Dictionary::rbf(Observable::Identity, data, 5, 4),
                                Dictionary::prefix_only(Observable::Identity, 2)};
  dicts[0].set_scaler(pk::dict::Scaler::fit(data));
  randomize(dicts[0].params(), 9);

  int trial = 0;
  for (const auto& d : dicts) {
    const Eigen::Index n = d.n_psi();
    for (auto op : {OperatorModel::constant(n, 1), OperatorModel::affine(n, 1), OperatorModel::bilinear(n, 1),
                    OperatorModel::poly(n, 1, 3), OperatorModel::network(n, 1, {6, 5}, 2, true),
                    OperatorModel::network(n, 1, {4}, 2, false)}) {
      randomize(op.params(), 100 + trial);
      ckpt::Checkpoint c;
      c.predictor = pk::eval::Predictor::single("m", d, op);
      c.system = sys;
      c.dt = 0.01;
      c.kind = "pknn";
      c.provenance = ckpt::fingerprint("text");
      c.extra["epochs_run"] = 12;
      const std::string path = temp_path("ckpt" + std::to_string(trial++));
      ckpt::save(c, path);
      const ckpt::Checkpoint back = ckpt::load(path);
      REQUIRE(back.predictor.members.size() == 1);
      const auto& m = back.predictor.members.front();
      CHECK(same_bits(m.op.params(), op.params()));
      CHECK(m.op.variant() == op.variant());
      CHECK(m.dict.n_psi() == d.n_psi());
      if (d.tail() == pk::dict::Tail::Network) CHECK(same_bits(m.dict.params(), d.params()));
      Eigen::VectorXd x(2);
      x << 0.3, -0.7;
      Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.4);
      CHECK(same_bits(m.dict.evaluate(x), d.evaluate(x)));
      CHECK(same_bits(m.op.apply(u, d.evaluate(x)), op.apply(u, d.evaluate(x))));
      CHECK(back.predictor.keys.empty());
      CHECK(back.provenance == c.provenance);
      CHECK(back.extra["epochs_run"] == 12);
      CHECK(pk::describe(back.system) == pk::describe(sys));

      ckpt::save(back, path + ".again");
      CHECK(slurp(path) == slurp(path + ".again"));
      std::filesystem::remove(path);
      std::filesystem::remove(path + ".again");
    }
  }
}

TEST_CASE("keyed families keep their keys") {
  ckpt::Checkpoint c;
  c.system = pk::dyn::System(pk::dyn::Duffing{});
  c.dt = 0.25;
  c.kind = "m1";
  c.predictor.name = "m1";
  for (int i = 0; i < 3; ++i) {
    auto op = OperatorModel::constant(4, 3);
    randomize(op.params(), i);
    c.predictor.members.push_back({Dictionary::network(Observable::Identity, 2, 4, {5}, i), op});
    c.predictor.keys.push_back(Eigen::Vector3d(i, 0.5 * i, -i));
  }
  const std::string path = temp_path("family");
  ckpt::save(c, path);
  const auto back = ckpt::load(path);
  REQUIRE(back.predictor.keys.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(same_bits(back.predictor.keys[i], c.predictor.keys[i]));
    CHECK(same_bits(back.predictor.members[i].op.params(), c.predictor.members[i].op.params()));
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects foreign or damaged files") {
  ckpt::Checkpoint c;
  c.system = pk::dyn::System(pk::dyn::Vdpm{});
  c.dt = 0.01;
  c.kind = "m2";
  c.predictor = pk::eval::Predictor::single("m2", Dictionary::prefix_only(Observable::Identity, 2),
                                            OperatorModel::affine(3, 1));
  const std::string path = temp_path("damaged");
  ckpt::save(c, path);
  const std::string good = slurp(path);

  auto write = [&](const std::string& text) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
  };
  auto message = [&]() -> std::string {
    try {
      ckpt::load(path);
    } catch (const pk::ConfigError& e) {
      return e.what();
    }
    return "";
  };

  std::string future = good;
  future.replace(future.find("\"1.0\""), 5, "\"2.0\"");
  write(future);
  CHECK(message().find("format version 2.0 is not supported") != std::string::npos);

  std::string minor = good;
  minor.replace(minor.find("\"1.0\""), 5, "\"1.7\"");
  write(minor);
  CHECK(message().empty());

  write(good.substr(0, good.size() - 8));
  CHECK(message().find("truncated") != std::string::npos);
  write(good + "x");
  CHECK(message().find("trailing") != std::string::npos);
  write("{\"format\": \"other\"}\n");
  CHECK(message().find("not a checkpoint") != std::string::npos);
  write("not json\n");
  CHECK(!message().empty());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ckpt::load(path), pk::ConfigError);
}

TEST_CASE("fingerprints are stable FNV-1a") {
  CHECK(ckpt::fingerprint("") == "cbf29ce484222325");
  CHECK(ckpt::fingerprint("a") == "af63dc4c8601ec8c");
  CHECK(ckpt::fingerprint("seed = 1\n") != ckpt::fingerprint("seed = 2\n"));
}
