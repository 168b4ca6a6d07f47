#pragma once
// Trajectory datasets: sampling from the simulators, flattening into
// transition batches, and the on-disk format.
//
// File layout: one JSON header line, then raw little-endian float64 blocks,
// states trajectory-major (each trajectory N+1 columns of state_dim), then
// parameters in the same order (N columns of param_dim).

#include "pk/dynamics.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pk {

struct TrajectoryDataset {
  dyn::System system;
  double dt = 0.0;
  std::uint64_t seed = 0;
  /// Per trajectory: state_dim x (N+1).
  std::vector<Eigen::MatrixXd> states;
  /// Per trajectory: param_dim x N.
  std::vector<Eigen::MatrixXd> params;

  Eigen::Index trajectories() const { return static_cast<Eigen::Index>(states.size()); }
  Eigen::Index steps() const { return params.empty() ? 0 : params.front().cols(); }
  Eigen::Index state_dim() const { return system.state_dim(); }
  Eigen::Index param_dim() const { return system.param_dim(); }
  Eigen::Index transitions() const;

  /// Throws DimensionError on shape violations and NumericalError on non-finite values.
  void validate() const;
};

struct SamplingSpec {
  Eigen::Index trajectories = 1;
  Eigen::Index steps = 1;
  double dt = 0.01;
  std::uint64_t seed = 0;
  /// Duffing only: consecutive trajectories sharing one parameter draw.
  Eigen::Index trajectories_per_parameter = 1;
  double rk23_tol = 1e-8;
  /// Cap on worker threads; 0 uses the process default.
  std::size_t threads = 0;

  void validate() const;
};

/// Samples initial conditions and parameters with each system's law and
/// integrates. Trajectory m draws from its own stream seeded by (seed, m), so
/// results do not depend on the thread count.
TrajectoryDataset generate(const dyn::System& system, const SamplingSpec& spec);

/// Transition triples as columns: x_n, u_n, x_{n+1}.
struct Transitions {
  Eigen::MatrixXd x;
  Eigen::MatrixXd u;
  Eigen::MatrixXd y;

  Eigen::Index size() const { return x.cols(); }
};

Transitions flatten(const TrajectoryDataset& ds);

/// Subset of whole trajectories [first, first + count).
TrajectoryDataset slice(const TrajectoryDataset& ds, Eigen::Index first, Eigen::Index count);

/// Training part and validation part; the validation part is the last
/// round(fraction * M) trajectories, at least one when fraction > 0 and M > 1.
std::pair<TrajectoryDataset, TrajectoryDataset> split_validation(const TrajectoryDataset& ds, double fraction);

nlohmann::json describe(const dyn::System& system);
dyn::System system_from_json(const nlohmann::json& j);

void save_dataset(const TrajectoryDataset& ds, const std::string& path);
/// Throws ConfigError on malformed or truncated files.
TrajectoryDataset load_dataset(const std::string& path);

/// One row per transition: trajectory, n, x..., u..., x_next...
void export_csv(const TrajectoryDataset& ds, std::ostream& out);

namespace io {

void write_doubles(std::ostream& out, const double* data, std::size_t n);
void read_doubles(std::istream& in, double* data, std::size_t n);

}  // namespace io

}  // namespace pk
