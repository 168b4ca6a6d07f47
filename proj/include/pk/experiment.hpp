#pragma once
// Config-driven experiments: typed view of a configuration document, model
// construction and fitting for every model kind, control problems and sweeps.

#include "pk/checkpoint.hpp"
#include "pk/config.hpp"
#include "pk/control.hpp"
#include "pk/dataset.hpp"
#include "pk/evaluation.hpp"
#include "pk/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pk::app {

/// m0: constant K on (1, g(x)); m1: one constant K per training parameter;
/// m2: affine in u; m3: bilinear; m4: polynomial in u; pknn: network in u.
enum class ModelKind { M0, M1, M2, M3, M4, PkNn };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct DictionarySpec {
  dict::Observable observable = dict::Observable::Identity;
  dict::Tail tail = dict::Tail::Network;
  /// Total lifted dimension for network tails.
  Eigen::Index n_psi = 0;
  std::vector<Eigen::Index> hidden{64, 64};
  Eigen::Index rbf_centers = 0;
  /// Fit an affine pre-scaler mapping the training data box onto [-1, 1].
  bool scale = false;
  std::uint64_t seed = 1;
};

struct ModelSpec {
  ModelKind kind = ModelKind::PkNn;
  std::vector<Eigen::Index> hidden{64};
  bool fixed_first_row = true;
  /// pknn: start training from K(u) = I instead of a random output layer.
  bool identity_start = false;
  int degree = 3;
  std::uint64_t seed = 2;
};

struct EvaluationSpec {
  bool resubstitute = false;
};

struct ControlSpec {
  std::vector<Eigen::Index> observables{0};
  double lambda = 0.0;
  int horizon = 10;
  int steps = 0;
  /// One row per tracked observable; r_n = levels[row][k] where k counts the
  /// entries of `switch_at` that are <= n.
  std::vector<std::vector<double>> levels;
  std::vector<int> switch_at;
  /// CSV with a header line and one row per step 0..steps, one column per
  /// tracked observable. Takes precedence over `levels`.
  std::string reference_file;
  std::vector<double> box_lower{-1.0};
  std::vector<double> box_upper{1.0};
  /// One value fills the state; otherwise the full initial state.
  std::vector<double> initial_state{0.0};
  double plant_tol = 1e-8;
  optim::MinimizeOptions optimizer;

  Eigen::Index samples = 2000;
  std::uint64_t seed = 4;
  double threshold = 1e-6;
};

/// One swept key with its values.
struct SweepAxis {
  std::string section;
  std::string key;
  cfg::Array values;
};

struct ExperimentConfig {
  cfg::Document document;
  dyn::System system;
  SamplingSpec sampling;
  SamplingSpec test;
  DictionarySpec dictionary;
  ModelSpec model;
  train::TrainingConfig training;
  EvaluationSpec evaluation;
  ControlSpec control;
  /// Cartesian product of the axes, or element-wise pairing when `sweep_zip`.
  std::vector<SweepAxis> sweep;
  bool sweep_zip = false;
  /// Write measured wall-clock seconds into CSVs; zeros otherwise, so reruns
  /// are byte-identical.
  bool timing = false;

  /// Validates every block and rejects unknown sections and keys; errors name
  /// the source line.
  static ExperimentConfig from_document(cfg::Document doc);
  static ExperimentConfig load(const std::string& path);

  /// Seeds of blocks without an explicit seed derive from the top-level seed.
  void reseed(std::uint64_t seed);
  void set_threads(std::size_t threads);
};

TrajectoryDataset generate_data(const ExperimentConfig& c, bool test_split);

struct FitResult {
  eval::Predictor predictor;
  /// One report per fitted member; families have several.
  std::vector<train::FitReport> reports;
  double seconds = 0.0;

  /// Member histories merged by epoch (means over the members that reached it).
  train::FitReport combined() const;
};

/// Dictionary of the configured shape built against the training states.
dict::Dictionary build_dictionary(const DictionarySpec& spec, const TrajectoryDataset& data);

FitResult fit(const ExperimentConfig& c, const TrajectoryDataset& train, const train::EpochHook& hook = {});

ckpt::Checkpoint make_checkpoint(const ExperimentConfig& c, const FitResult& result);

/// rows x (steps + 1)
Eigen::MatrixXd control_reference(const ControlSpec& spec);

ctrl::TrackingProblem tracking_problem(const ExperimentConfig& c);

optim::BoxBounds parameter_box(const ControlSpec& spec, Eigen::Index n_u);

struct SweepCell {
  std::vector<cfg::Value> values;
  ExperimentConfig config;
};

std::vector<SweepCell> sweep_cells(const ExperimentConfig& c);

}  // namespace pk::app
