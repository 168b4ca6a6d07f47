#include "doctest.h"

#include "pk/error.hpp"
#include "pk/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using pk::app::ExperimentConfig;
namespace app = pk::app;

namespace {

ExperimentConfig from_text(const std::string& text) {
  return ExperimentConfig::from_document(pk::cfg::parse(text, "x.toml"));
}

std::string error_of(const std::string& text) {
  try {
    from_text(text);
  } catch (const pk::ConfigError& e) {
    return e.what();
  }
  return "";
}

const std::string kDuffing = R"(seed = 5
[system]
name = "duffing"
[sampling]
parameters = 3
trajectories_per_parameter = 2
steps = 6
dt = 0.25
[dictionary]
n_psi = 6
hidden = [8]
[model]
kind = "m1"
[training]
epochs = 3
)";

}  // namespace

TEST_CASE("shipped templates load") {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(PK_SOURCE_DIR "/configs")) {
    if (entry.path().extension() != ".toml") continue;
    CAPTURE(entry.path().string());
    const ExperimentConfig c = ExperimentConfig::load(entry.path().string());
    CHECK(c.training.epochs > 0);
    CHECK(c.dictionary.n_psi >= 1 + (c.system.as<pk::dyn::Kdv>() ? 2 : c.system.state_dim()));
    ++count;
  }
  CHECK(count == 6);
  const auto kdv = ExperimentConfig::load(PK_SOURCE_DIR "/configs/kdv_sin.toml");
  const auto p = app::tracking_problem(kdv);
  CHECK(p.reference(0, 500) == 1.90);
  CHECK(p.reference(0, 501) == 3.16);
  CHECK(p.reference.cols() == kdv.control.steps + 1);
  CHECK(p.x0.size() == 128);
  CHECK(p.x0.minCoeff() == 0.2);
  CHECK(p.box.lower.size() == 3);
}

TEST_CASE("experiment config derives sizes and seeds") {
  ExperimentConfig c = from_text(kDuffing);
  CHECK(c.sampling.trajectories == 6);
  CHECK(c.test.trajectories == 1);
  CHECK(c.test.dt == 0.25);
  CHECK(c.sampling.seed == 5);
  CHECK(c.test.seed == 5 + 7919);
  CHECK(c.dictionary.seed == 6);
  CHECK(c.model.seed == 7);
  CHECK(c.training.seed == 8);
  c.reseed(40);
  CHECK(c.sampling.seed == 40);
  CHECK(c.training.seed == 43);
  CHECK(c.document.integer("", "seed", 0) == 40);

  const ExperimentConfig pinned = from_text(kDuffing + "seed = 99\n");
  CHECK(pinned.training.seed == 99);
}

TEST_CASE("experiment config rejects bad input with its location") {
  CHECK(error_of(kDuffing + "epoch = 3\n") == "x.toml:16: [training] epoch: unknown key");
  CHECK(error_of(kDuffing + "[extra]\n").find("unknown section [extra]") != std::string::npos);
  CHECK(!error_of(R"([system]
name = "vdpm"
[sampling]
trajectories = 0
[dictionary]
n_psi = 4
)").empty());
  CHECK(error_of(R"([system]
name = "vdpm"
[sampling]
trajectories = 4
parameters = 2
[dictionary]
n_psi = 4
)").find("x.toml:5:") == 0);
  CHECK(error_of("[system]\nname = \"duffing\"\n[dictionary]\nobservable = \"mass_momentum\"\nn_psi = 6\n")
            .find("mass_momentum needs the kdv system") != std::string::npos);
  CHECK(error_of("[system]\nname = \"duffing\"\n[dictionary]\nn_psi = 2\n").find("x.toml:4:") == 0);
  CHECK(error_of("[system]\nname = \"pendulum\"\n").find("unknown system") != std::string::npos);
  CHECK(error_of("[system]\nname = \"duffing\"\n[dictionary]\nn_psi = 3\n[model]\nkind = \"m9\"\n")
            .find("unknown model kind") != std::string::npos);
  CHECK(error_of("[system]\nname = \"kdv\"\nnx = 16\n[dictionary]\nobservable = \"mass_momentum\"\nn_psi = 6\n"
                 "[control]\nreference_file = \"/nonexistent/ref.csv\"\n")
            .find("cannot open") != std::string::npos);
  CHECK(error_of("[system]\nname = \"kdv\"\nnx = 16\n[dictionary]\nobservable = \"mass_momentum\"\nn_psi = 6\n"
                 "[control]\nobservables = [2]\n")
            .find("out of range") != std::string::npos);
  CHECK(error_of(kDuffing + "[sweep]\nmodel.colour = [1]\n").find("not a configurable key") != std::string::npos);
}

TEST_CASE("experiment config survives a text round trip") {
  const ExperimentConfig a = ExperimentConfig::load(PK_SOURCE_DIR "/configs/kdv_sin.toml");
  const ExperimentConfig b = from_text(pk::cfg::serialize(a.document));
  CHECK(b.document == a.document);
  CHECK(b.control.levels == a.control.levels);
  CHECK(b.training.learning_rate == a.training.learning_rate);
}

TEST_CASE("control references from levels and from a file") {
  app::ControlSpec s;
  s.observables = {0, 1};
  s.steps = 4;
  s.levels = {{1.0, 2.0, 3.0}, {5.0, 6.0, 7.0}};
  s.switch_at = {2, 4};
  const Eigen::MatrixXd r = app::control_reference(s);
  CHECK(r.row(0) == Eigen::RowVectorXd::LinSpaced(5, 0, 4).unaryExpr([](double n) {
    return n < 2 ? 1.0 : (n < 4 ? 2.0 : 3.0);
  }));
  CHECK(r(1, 3) == 6.0);

  const auto path = (std::filesystem::temp_directory_path() / "pk_test_ref.csv").string();
  {
    std::ofstream out(path);
    out << "mass,momentum\n";
    for (int n = 0; n <= 4; ++n) out << 0.5 * n << ',' << -n << '\n';
  }
  s.reference_file = path;
  const Eigen::MatrixXd f = app::control_reference(s);
  CHECK(f(0, 4) == 2.0);
  CHECK(f(1, 2) == -2.0);
  s.steps = 5;
  CHECK_THROWS_AS(app::control_reference(s), pk::ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("sweep cells cover the grid or zip the axes") {
  ExperimentConfig grid = from_text(kDuffing + "[sweep]\nmodel.kind = [\"m0\", \"m2\", \"pknn\"]\ntraining.epochs = [1, 2]\n");
  const auto cells = app::sweep_cells(grid);
  REQUIRE(cells.size() == 6);
  std::set<std::pair<std::string, int>> seen;
  for (const auto& c : cells) {
    seen.insert({app::to_string(c.config.model.kind), c.config.training.epochs});
    CHECK(c.values.size() == 2);
  }
  CHECK(seen.size() == 6);

  ExperimentConfig zip = from_text(kDuffing +
                                   "[sweep]\nmode = \"zip\"\nsampling.parameters = [1, 2]\n"
                                   "sampling.trajectories_per_parameter = [4, 2]\n");
  const auto z = app::sweep_cells(zip);
  REQUIRE(z.size() == 2);
  CHECK(z[0].config.sampling.trajectories == 4);
  CHECK(z[1].config.sampling.trajectories == 4);
  CHECK(z[1].config.sampling.trajectories_per_parameter == 2);
  CHECK(error_of(kDuffing + "[sweep]\nmode = \"zip\"\ntraining.epochs = [1, 2]\nmodel.degree = [1]\n")
            .find("equal lengths") != std::string::npos);
}

TEST_CASE("m1 fits one keyed member per training parameter") {
  const ExperimentConfig c = from_text(kDuffing);
  const auto data = app::generate_data(c, false);
  const auto r = app::fit(c, data);
  REQUIRE(r.predictor.members.size() == 3);
  REQUIRE(r.predictor.keys.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(r.predictor.keys[i].isApprox(data.params[2 * i].col(0)));
  CHECK(r.reports.size() == 3);
  CHECK(r.combined().history.size() == 3);
  const auto k = app::make_checkpoint(c, r);
  CHECK(k.extra["members"] == 3);
  CHECK(k.provenance.size() == 16);
}

TEST_CASE("m0 ignores the dictionary tail") {
  const ExperimentConfig m0 = from_text(R"([system]
name = "vdpm"
[sampling]
trajectories = 4
steps = 5
[dictionary]
n_psi = 6
[model]
kind = "m0"
[training]
epochs = 2
)");
  const auto r = app::fit(m0, app::generate_data(m0, false));
  CHECK(r.predictor.members.front().dict.n_psi() == 3);
  CHECK(r.predictor.members.front().op.variant() == pk::koop::Variant::Constant);
}
