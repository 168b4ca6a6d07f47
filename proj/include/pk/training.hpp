#pragma once
// Fitting: closed-form EDMD, joint minibatch training of dictionary and
// operator, and alternating least-squares / gradient schemes.

#include "pk/dataset.hpp"
#include "pk/dictionary.hpp"
#include "pk/koopman.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace pk::train {

struct TrainingConfig {
  Eigen::Index batch_size = 256;
  int epochs = 1000;
  double learning_rate = 1e-3;
  /// Epochs without a training-loss improvement before the rate is multiplied by `decay`.
  int patience = 20;
  double decay = 0.8;
  double ridge = 1e-8;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Stop once the epoch training loss (mean per sample) is at or below this.
  double tolerance = 1e-9;
  /// Adam steps on the dictionary per alternating round.
  int inner_steps = 50;
  /// Write a checkpoint every this many epochs from the CLI; 0 disables.
  int checkpoint_every = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct FitReport {
  std::vector<EpochRecord> history;
  Eigen::VectorXd dict_params;
  Eigen::VectorXd model_params;
  int best_epoch = 0;
  double best_loss = 0.0;
  bool diverged = false;
  std::string message;
};

/// epoch,train_loss,val_loss,seconds
void write_loss_csv(const FitReport& report, std::ostream& out);

/// Transitions lifted for a loss: columns of x, y and parameter indices into
/// the distinct parameter columns `u`.
struct Batch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  Eigen::MatrixXd u;
  std::vector<Eigen::Index> index;

  Eigen::Index size() const { return x.cols(); }
  static Batch from(const Transitions& t);
  static Batch from(const Transitions& t, const std::vector<Eigen::Index>& columns);
};

/// sum over the batch of |psi(y) - K(u) psi(x)|^2 with the current parameters.
double pk_loss(const dict::Dictionary& dict, const koop::OperatorModel& model, const Batch& batch);

/// Records the loss on a tape. theta = [dictionary params, operator params];
/// the result is multiplied by `scale`.
ad::Var pk_loss(ad::Tape& tape, ad::Var theta, const dict::Dictionary& dict, const koop::OperatorModel& model,
                const Batch& batch, double scale = 1.0);

/// K minimizing sum |psi(y) - K psi(x)|^2 + ridge |K|_F^2 on a fixed dictionary.
koop::OperatorModel edmd_fit(const TrajectoryDataset& ds, const dict::Dictionary& dict, double ridge);

/// Closed-form fit of a constant, affine, bilinear or polynomial operator on
/// the current dictionary. Updates `model` in place.
void least_squares_fit(const Transitions& data, const dict::Dictionary& dict, koop::OperatorModel& model,
                       double ridge);

/// Called after each recorded epoch with the current (not the best) parameters.
using EpochHook = std::function<void(const EpochRecord&, const dict::Dictionary&, const koop::OperatorModel&)>;

/// Joint minibatch Adam on dictionary and operator parameters. The last
/// validation_fraction of trajectories is held out; the parameters with the
/// best validation loss (training loss when nothing is held out) are written
/// back into `dict` and `model`. A non-finite loss stops training with
/// `diverged` set.
FitReport train_joint(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                      const TrainingConfig& cfg, const EpochHook& hook = {});

/// PK-NN: train_joint with a network operator and a trainable dictionary.
FitReport train_pknn(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                     const TrainingConfig& cfg, const EpochHook& hook = {});

/// Alternating fit for constant (EDMD with dictionary learning), affine and
/// bilinear operators. Round 1 fits the operator blocks by least squares on
/// the initial dictionary; each later round takes `inner_steps` Adam steps on
/// the dictionary and refits the blocks.
FitReport fit_alternating(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                          const TrainingConfig& cfg);

/// Polynomial-in-u operator. With a fixed dictionary a single least-squares fit
/// over monomials(u) (x) psi(x); with a trainable one a least-squares start
/// followed by joint Adam.
FitReport fit_poly(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                   const TrainingConfig& cfg);

/// Mean per-sample loss over `data`, evaluated in chunks.
double mean_loss(const dict::Dictionary& dict, const koop::OperatorModel& model, const Transitions& data);

}  // namespace pk::train
