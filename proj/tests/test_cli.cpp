#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path dir;
  explicit Workdir(const std::string& name) : dir(fs::temp_directory_path() / ("pk_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(PK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kConfig = R"(seed = 2
[system]
name = "kdv"
nx = 16
[sampling]
trajectories = 6
steps = 12
dt = 0.01
[test]
trajectories = 2
[dictionary]
observable = "mass_momentum"
n_psi = 5
hidden = [6]
[model]
hidden = [8]
[training]
epochs = 4
batch_size = 32
checkpoint_every = 2
[control]
levels = [1.5]
steps = 6
horizon = 3
lambda = 0.005
initial_state = 0.2
samples = 50
[sweep]
model.kind = ["m2", "m3"]
)";

}  // namespace

TEST_CASE("cli commands are deterministic") {
  Workdir w("det");
  const std::string cfg = w / "c.toml";
  write(cfg, kConfig);
  const std::string c = " --config " + cfg;
  for (const std::string tag : {"a", "b"}) {
    REQUIRE(run("generate-data" + c + " --out " + (w / ("train_" + tag))) == 0);
    REQUIRE(run("generate-data" + c + " --split test --out " + (w / ("test_" + tag))) == 0);
    REQUIRE(run("train" + c + " --data " + (w / "train_a") + " --out " + (w / ("m_" + tag))) == 0);
    REQUIRE(run("predict" + c + " --checkpoint " + (w / ("m_" + tag)) + " --data " + (w / "test_a") + " --out " +
                (w / ("p_" + tag))) == 0);
    REQUIRE(run("evaluate" + c + " --checkpoint " + (w / ("m_" + tag)) + " --checkpoint " + (w / "m_a.epoch2") +
                " --data " + (w / "test_a") + " --out " + (w / ("e_" + tag))) == 0);
    REQUIRE(run("control" + c + " --checkpoint " + (w / ("m_" + tag)) + " --out " + (w / ("ctl_" + tag))) == 0);
    REQUIRE(run("controllability" + c + " --checkpoint " + (w / ("m_" + tag)) + " --out " + (w / ("sv_" + tag))) ==
            0);
    REQUIRE(run("sweep" + c + " --out " + (w / ("sw_" + tag))) == 0);
    REQUIRE(run("export-csv --data " + (w / ("test_" + tag)) + " --out " + (w / ("x_" + tag))) == 0);
  }
  for (const std::string f : {"train_", "test_", "m_", "m_.loss.csv", "p_", "e_", "e_.errors.csv", "ctl_", "sv_",
                              "sw_/summary.csv", "sw_/cell1.ckpt", "sw_/cell1.loss.csv", "x_"}) {
    std::string a = f, b = f;
    const auto at = f.find('_') + 1;
    a.insert(at, "a");
    b.insert(at, "b");
    CAPTURE(f);
    const std::string ta = slurp(w / a);
    CHECK(!ta.empty());
    CHECK(ta == slurp(w / b));
  }
  CHECK(fs::exists(w / "m_a.epoch4"));

  REQUIRE(run("generate-data" + c + " --seed 9 --out " + (w / "train_c")) == 0);
  CHECK(slurp(w / "train_c") != slurp(w / "train_a"));
}

TEST_CASE("cli exit codes") {
  Workdir w("codes");
  const std::string cfg = w / "c.toml";
  write(cfg, kConfig);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("generate-data --out x") == 2);
  CHECK(run("--help") == 0);

  write(w / "bad.toml", std::string(kConfig) + "[training]\n");
  CHECK(run("generate-data --config " + (w / "bad.toml") + " --out " + (w / "d")) == 2);
  write(w / "typo.toml", std::string(kConfig) + "colour = 1\n");
  CHECK(run("generate-data --config " + (w / "typo.toml") + " --out " + (w / "d")) == 2);
  CHECK(run("generate-data --config " + (w / "missing.toml") + " --out " + (w / "d")) == 2);
  CHECK(run("train --config " + cfg + " --data " + (w / "missing.bin") + " --out " + (w / "m")) == 2);

  write(w / "ref.toml", std::string(kConfig).replace(std::string(kConfig).find("levels = [1.5]"), 14,
                                                       "reference_file = \"" + (w / "none.csv") + "\""));
  CHECK(run("control --config " + (w / "ref.toml") + " --checkpoint " + (w / "m") + " --out " + (w / "o")) == 2);

  // Dataset from a different system than the config describes.
  write(w / "vdpm.toml", "[system]\nname = \"vdpm\"\n[sampling]\ntrajectories = 2\nsteps = 3\n[dictionary]\nn_psi = 4\n");
  REQUIRE(run("generate-data --config " + (w / "vdpm.toml") + " --out " + (w / "v")) == 0);
  CHECK(run("train --config " + cfg + " --data " + (w / "v") + " --out " + (w / "m")) == 2);

  // A plant blow-up during control is a numerical failure.
  write(w / "hot.toml", std::string(kConfig).replace(std::string(kConfig).find("initial_state = 0.2"), 19,
                                                       "initial_state = 1e200"));
  REQUIRE(run("generate-data --config " + cfg + " --out " + (w / "d")) == 0);
  REQUIRE(run("train --config " + cfg + " --data " + (w / "d") + " --out " + (w / "m")) == 0);
  CHECK(run("control --config " + (w / "hot.toml") + " --checkpoint " + (w / "m") + " --out " + (w / "o")) == 3);
}
