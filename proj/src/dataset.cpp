#include "pk/dataset.hpp"

#include "pk/error.hpp"
#include "pk/parallel.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>

namespace pk {

Eigen::Index TrajectoryDataset::transitions() const {
  Eigen::Index n = 0;
  for (const auto& p : params) n += p.cols();
  return n;
}

void TrajectoryDataset::validate() const {
  require_dims(states.size() == params.size(), "dataset: trajectory count mismatch");
  require_dims(dt > 0.0, "dataset: dt must be positive");
  for (std::size_t m = 0; m < states.size(); ++m) {
    require_dims(states[m].rows() == state_dim(), "dataset: state dimension mismatch");
    require_dims(params[m].rows() == param_dim(), "dataset: parameter dimension mismatch");
    require_dims(states[m].cols() == params[m].cols() + 1, "dataset: need one more state than parameters");
    if (!states[m].allFinite() || !params[m].allFinite()) throw NumericalError("dataset: non-finite values");
  }
}

void SamplingSpec::validate() const {
  if (trajectories < 1) throw ConfigError("sampling: trajectories must be >= 1");
  if (steps < 1) throw ConfigError("sampling: steps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("sampling: dt must be positive");
  if (trajectories_per_parameter < 1) throw ConfigError("sampling: trajectories_per_parameter must be >= 1");
  if (!(rk23_tol > 0.0)) throw ConfigError("sampling: rk23_tol must be positive");
}

namespace {

enum StreamTag : std::uint32_t { kInitial = 1, kParams = 2 };

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index, StreamTag tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::VectorXd initial_state(const dyn::System& sys, std::mt19937_64& rng) {
  Eigen::VectorXd x(sys.state_dim());
  if (sys.as<dyn::Duffing>()) {
    x << uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0);
  } else if (sys.as<dyn::Vdpm>()) {
    x << uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0);
  } else if (const auto* f = sys.as<dyn::Fhn>()) {
    // Integer wavenumber strictly inside (1, 20).
    const int a = std::uniform_int_distribution<int>(2, 19)(rng);
    x.setZero();
    for (Eigen::Index j = 0; j < f->nx; ++j) {
      x(j) = std::sin(a * std::numbers::pi * f->grid(j) / 10.0 + std::numbers::pi / 2.0);
    }
  } else {
    const auto* k = sys.as<dyn::Kdv>();
    double b[3];
    for (double& v : b) v = uniform(rng, 0.0, 1.0);
    const double total = b[0] + b[1] + b[2];
    for (double& v : b) v /= total;
    for (Eigen::Index j = 0; j < k->nx; ++j) {
      const double xj = k->grid(j);
      const double s = std::sin(xj / 2.0);
      x(j) = b[0] * std::exp(-std::pow(xj - std::numbers::pi / 2.0, 2)) + b[1] * (-s * s) +
             b[2] * std::exp(-std::pow(xj + std::numbers::pi / 2.0, 2));
    }
  }
  return x;
}

Eigen::VectorXd duffing_params(std::mt19937_64& rng) {
  Eigen::VectorXd u(3);
  u << uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 2.0), uniform(rng, -2.0, 2.0);
  return u;
}

}  // namespace

TrajectoryDataset generate(const dyn::System& system, const SamplingSpec& spec) {
  spec.validate();
  TrajectoryDataset ds;
  ds.system = system;
  ds.dt = spec.dt;
  ds.seed = spec.seed;
  const auto m_total = static_cast<std::size_t>(spec.trajectories);
  ds.states.resize(m_total);
  ds.params.resize(m_total);
  const Eigen::Index nu = system.param_dim();
  const Eigen::Index n_steps = spec.steps;

  parallel_for(
      m_total,
      [&](std::size_t m) {
        auto rng_x = stream(spec.seed, m, kInitial);
        Eigen::MatrixXd u(nu, n_steps);
        if (system.as<dyn::Duffing>()) {
          const auto group = static_cast<std::uint64_t>(m) / static_cast<std::uint64_t>(spec.trajectories_per_parameter);
          auto rng_u = stream(spec.seed, group, kParams);
          u = duffing_params(rng_u).replicate(1, n_steps);
        } else {
          auto rng_u = stream(spec.seed, m, kParams);
          for (Eigen::Index n = 0; n < n_steps; ++n) {
            for (Eigen::Index i = 0; i < nu; ++i) u(i, n) = uniform(rng_u, -1.0, 1.0);
          }
        }
        Eigen::MatrixXd x(system.state_dim(), n_steps + 1);
        x.col(0) = initial_state(system, rng_x);
        double h_hint = 0.0;
        for (Eigen::Index n = 0; n < n_steps; ++n) {
          x.col(n + 1) = dyn::advance(system, x.col(n), u.col(n), spec.dt, spec.rk23_tol, &h_hint);
        }
        ds.states[m] = std::move(x);
        ds.params[m] = std::move(u);
      },
      spec.threads);
  return ds;
}

Transitions flatten(const TrajectoryDataset& ds) {
  Transitions t;
  const Eigen::Index total = ds.transitions();
  t.x.resize(ds.state_dim(), total);
  t.y.resize(ds.state_dim(), total);
  t.u.resize(ds.param_dim(), total);
  Eigen::Index col = 0;
  for (std::size_t m = 0; m < ds.states.size(); ++m) {
    const Eigen::Index n = ds.params[m].cols();
    t.x.middleCols(col, n) = ds.states[m].leftCols(n);
    t.y.middleCols(col, n) = ds.states[m].rightCols(n);
    t.u.middleCols(col, n) = ds.params[m];
    col += n;
  }
  return t;
}

TrajectoryDataset slice(const TrajectoryDataset& ds, Eigen::Index first, Eigen::Index count) {
  require_dims(first >= 0 && count >= 0 && first + count <= ds.trajectories(), "slice: range out of bounds");
  TrajectoryDataset out;
  out.system = ds.system;
  out.dt = ds.dt;
  out.seed = ds.seed;
  out.states.assign(ds.states.begin() + first, ds.states.begin() + first + count);
  out.params.assign(ds.params.begin() + first, ds.params.begin() + first + count);
  return out;
}

std::pair<TrajectoryDataset, TrajectoryDataset> split_validation(const TrajectoryDataset& ds, double fraction) {
  require_dims(fraction >= 0.0 && fraction < 1.0, "split_validation: fraction must be in [0, 1)");
  const Eigen::Index m = ds.trajectories();
  Eigen::Index n_val = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(m)));
  if (fraction > 0.0 && m > 1) n_val = std::max<Eigen::Index>(n_val, 1);
  n_val = std::min(n_val, m - 1);
  n_val = std::max<Eigen::Index>(n_val, 0);
  return {slice(ds, 0, m - n_val), slice(ds, m - n_val, n_val)};
}

nlohmann::json describe(const dyn::System& system) {
  nlohmann::json j;
  j["name"] = system.name();
  if (const auto* p = system.as<dyn::Vdpm>()) {
    j["mu"] = p->mu;
  } else if (const auto* f = system.as<dyn::Fhn>()) {
    j["nx"] = f->nx;
    j["control_dim"] = f->control_dim;
  } else if (const auto* k = system.as<dyn::Kdv>()) {
    j["nx"] = k->nx;
    j["forcing"] = k->forcing == dyn::KdvForcing::Sin ? "sin" : "linear";
  }
  return j;
}

dyn::System system_from_json(const nlohmann::json& j) {
  try {
    const std::string name = j.at("name").get<std::string>();
    if (name == "duffing") return dyn::System(dyn::Duffing{});
    if (name == "vdpm") {
      dyn::Vdpm p;
      p.mu = j.value("mu", 1.0);
      return dyn::System(p);
    }
    if (name == "fhn") {
      dyn::Fhn f;
      f.nx = j.value("nx", Eigen::Index{10});
      f.control_dim = j.value("control_dim", 1);
      return dyn::System(f);
    }
    if (name == "kdv") {
      dyn::Kdv k;
      k.nx = j.value("nx", Eigen::Index{128});
      const std::string forcing = j.value("forcing", std::string("sin"));
      if (forcing != "sin" && forcing != "linear") throw ConfigError("unknown kdv forcing '" + forcing + "'");
      k.forcing = forcing == "sin" ? dyn::KdvForcing::Sin : dyn::KdvForcing::Linear;
      return dyn::System(k);
    }
    throw ConfigError("unknown system '" + name + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("system descriptor: ") + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("system descriptor: ") + e.what());
  }
}

namespace io {

void write_doubles(std::ostream& out, const double* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto bits = __builtin_bswap64(std::bit_cast<std::uint64_t>(data[i]));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
}

void read_doubles(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) throw ConfigError("truncated binary payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(__builtin_bswap64(std::bit_cast<std::uint64_t>(data[i])));
  }
}

}  // namespace io

void save_dataset(const TrajectoryDataset& ds, const std::string& path) {
  ds.validate();
  nlohmann::json header;
  header["format"] = "pk-dataset";
  header["version"] = 1;
  header["system"] = describe(ds.system);
  header["state_dim"] = ds.state_dim();
  header["param_dim"] = ds.param_dim();
  header["trajectories"] = ds.trajectories();
  header["steps"] = ds.steps();
  header["dt"] = ds.dt;
  header["seed"] = ds.seed;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << header.dump() << '\n';
  for (const auto& x : ds.states) io::write_doubles(out, x.data(), static_cast<std::size_t>(x.size()));
  for (const auto& u : ds.params) io::write_doubles(out, u.data(), static_cast<std::size_t>(u.size()));
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

TrajectoryDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset '" + path + "': bad header: " + e.what());
  }
  if (header.value("format", std::string()) != "pk-dataset") throw ConfigError("'" + path + "' is not a dataset file");
  if (header.value("version", 0) != 1) throw ConfigError("dataset '" + path + "': unsupported version");
  TrajectoryDataset ds;
  ds.system = system_from_json(header.at("system"));
  ds.dt = header.at("dt").get<double>();
  ds.seed = header.at("seed").get<std::uint64_t>();
  const auto m = header.at("trajectories").get<Eigen::Index>();
  const auto n = header.at("steps").get<Eigen::Index>();
  if (header.at("state_dim").get<Eigen::Index>() != ds.state_dim() ||
      header.at("param_dim").get<Eigen::Index>() != ds.param_dim() || m < 0 || n < 0) {
    throw ConfigError("dataset '" + path + "': header dimensions disagree with the system");
  }
  ds.states.assign(static_cast<std::size_t>(m), Eigen::MatrixXd(ds.state_dim(), n + 1));
  ds.params.assign(static_cast<std::size_t>(m), Eigen::MatrixXd(ds.param_dim(), n));
  for (auto& x : ds.states) io::read_doubles(in, x.data(), static_cast<std::size_t>(x.size()));
  for (auto& u : ds.params) io::read_doubles(in, u.data(), static_cast<std::size_t>(u.size()));
  ds.validate();
  return ds;
}

void export_csv(const TrajectoryDataset& ds, std::ostream& out) {
  out << "trajectory,n";
  for (Eigen::Index i = 0; i < ds.state_dim(); ++i) out << ",x" << i;
  for (Eigen::Index i = 0; i < ds.param_dim(); ++i) out << ",u" << i;
  for (Eigen::Index i = 0; i < ds.state_dim(); ++i) out << ",x_next" << i;
  out << '\n';
  out.precision(17);
  for (std::size_t m = 0; m < ds.states.size(); ++m) {
    for (Eigen::Index n = 0; n < ds.params[m].cols(); ++n) {
      out << m << ',' << n;
      for (Eigen::Index i = 0; i < ds.state_dim(); ++i) out << ',' << ds.states[m](i, n);
      for (Eigen::Index i = 0; i < ds.param_dim(); ++i) out << ',' << ds.params[m](i, n);
      for (Eigen::Index i = 0; i < ds.state_dim(); ++i) out << ',' << ds.states[m](i, n + 1);
      out << '\n';
    }
  }
}

}  // namespace pk
