#include "pk/training.hpp"

#include "pk/error.hpp"
#include "pk/linalg.hpp"
#include "pk/nn.hpp"
#include "pk/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace pk::train {

namespace {

constexpr Eigen::Index kChunk = 4096;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

// Regressor rows for the closed-form fit: psi for constant, [psi; u] for
// affine, h(u) (x) psi for bilinear and polynomial operators.
Eigen::MatrixXd regressors(const koop::OperatorModel& model, const Eigen::MatrixXd& psi, const Eigen::MatrixXd& u) {
  const Eigen::Index d = model.dim();
  const Eigen::Index n = psi.cols();
  if (model.variant() == koop::Variant::Constant) return psi;
  if (model.variant() == koop::Variant::Affine) {
    Eigen::MatrixXd z(d + model.n_u(), n);
    z.topRows(d) = psi;
    z.bottomRows(model.n_u()) = u;
    return z;
  }
  const Eigen::Index nb = model.n_blocks();
  Eigen::MatrixXd h(nb, n);
  if (model.variant() == koop::Variant::Bilinear) {
    h.row(0).setOnes();
    h.bottomRows(model.n_u()) = u;
  } else {
    const auto exps = monomial_exponents(static_cast<int>(model.n_u()), model.max_degree());
    for (Eigen::Index j = 0; j < n; ++j) h.col(j) = monomial_features(u.col(j), exps);
  }
  Eigen::MatrixXd z(nb * d, n);
  for (Eigen::Index b = 0; b < nb; ++b) z.middleRows(b * d, d) = psi.array().rowwise() * h.row(b).array();
  return z;
}

void store_solution(koop::OperatorModel& model, const Eigen::MatrixXd& w) {
  const Eigen::Index d = model.dim();
  Eigen::VectorXd& p = model.params();
  p.resize(model.param_count());
  if (model.variant() == koop::Variant::Affine) {
    Eigen::Map<Eigen::MatrixXd>(p.data(), d, w.cols()) = w;
    return;
  }
  for (Eigen::Index b = 0; b < model.n_blocks(); ++b) {
    Eigen::Map<RowMajor>(p.data() + b * d * d, d, d) = w.middleCols(b * d, d);
  }
}

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Split {
  Transitions train;
  Transitions val;
};

Split split(const TrajectoryDataset& ds, double fraction) {
  Split s;
  if (fraction <= 0.0 || ds.trajectories() < 2) {
    s.train = flatten(ds);
    return s;
  }
  auto [tr, va] = split_validation(ds, fraction);
  s.train = flatten(tr);
  s.val = flatten(va);
  return s;
}

// Reshuffled minibatches over a fixed training set.
class MinibatchRunner {
 public:
  MinibatchRunner(const Transitions& data, Eigen::Index batch_size, std::uint64_t seed)
      : data_(data), batch_(std::min<Eigen::Index>(batch_size, data.size())), rng_(seed) {
    order_.resize(static_cast<std::size_t>(data.size()));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    reshuffle();
  }

  Batch next() {
    if (cursor_ >= order_.size()) reshuffle();
    const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_));
    std::vector<Eigen::Index> cols(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return Batch::from(data_, cols);
  }

  std::size_t batches_per_epoch() const {
    return (order_.size() + static_cast<std::size_t>(batch_) - 1) / static_cast<std::size_t>(batch_);
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  const Transitions& data_;
  Eigen::Index batch_;
  std::mt19937_64 rng_;
  std::vector<Eigen::Index> order_;
  std::size_t cursor_ = 0;
};

// One Adam step on theta[0, n_update) using the mean loss over `batch`.
// Returns the batch mean loss before the update.
double adam_batch(const dict::Dictionary& dict, const koop::OperatorModel& model, const Batch& batch,
                  Eigen::VectorXd& theta, Eigen::Index n_update, optim::AdamState& state) {
  ad::Tape tape;
  const ad::Var var = tape.variable(theta);
  const ad::Var loss = pk_loss(tape, var, dict, model, batch, 1.0 / static_cast<double>(batch.size()));
  const double value = tape.scalar(loss);
  if (!std::isfinite(value)) throw NumericalError("training loss is not finite");
  tape.backward(loss);
  Eigen::VectorXd g = tape.grad(var).reshaped();
  if (g.size() != theta.size()) g = Eigen::VectorXd::Zero(theta.size());
  if (!g.allFinite()) throw NumericalError("training gradient is not finite");
  if (n_update == theta.size()) {
    optim::adam_step(state, theta, g);
  } else {
    Eigen::VectorXd head = theta.head(n_update);
    optim::adam_step(state, head, g.head(n_update));
    theta.head(n_update) = head;
  }
  return value;
}

void unpack(const Eigen::VectorXd& theta, dict::Dictionary& dict, koop::OperatorModel& model) {
  const Eigen::Index nd = dict.params().size();
  dict.params() = theta.head(nd);
  model.params() = theta.tail(theta.size() - nd);
}

struct Plateau {
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;

  // Returns true when the rate should decay.
  bool update(double loss, int patience) {
    if (loss < best) {
      best = loss;
      stale = 0;
      return false;
    }
    if (++stale >= patience) {
      stale = 0;
      return true;
    }
    return false;
  }
};

}  // namespace

void TrainingConfig::validate() const {
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("training: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be positive");
  if (patience < 1) throw ConfigError("training: patience must be >= 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("training: decay must be in (0, 1]");
  if (!(ridge >= 0.0)) throw ConfigError("training: ridge must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("training: validation_fraction must be in [0, 1)");
  }
  if (!(tolerance >= 0.0)) throw ConfigError("training: tolerance must be >= 0");
  if (inner_steps < 0) throw ConfigError("training: inner_steps must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("training: checkpoint_every must be >= 0");
}

void write_loss_csv(const FitReport& report, std::ostream& out) {
  out << "epoch,train_loss,val_loss,seconds\n";
  out.precision(17);
  for (const auto& r : report.history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.seconds << '\n';
  }
}

Batch Batch::from(const Transitions& t) {
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(t.size()));
  std::iota(cols.begin(), cols.end(), Eigen::Index{0});
  return from(t, cols);
}

Batch Batch::from(const Transitions& t, const std::vector<Eigen::Index>& columns) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(columns.size());
  b.x.resize(t.x.rows(), n);
  b.y.resize(t.y.rows(), n);
  b.index.resize(columns.size());
  std::map<std::vector<double>, Eigen::Index> seen;
  std::vector<Eigen::Index> distinct;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index c = columns[static_cast<std::size_t>(j)];
    b.x.col(j) = t.x.col(c);
    b.y.col(j) = t.y.col(c);
    std::vector<double> key(t.u.col(c).data(), t.u.col(c).data() + t.u.rows());
    auto [it, inserted] = seen.emplace(std::move(key), static_cast<Eigen::Index>(distinct.size()));
    if (inserted) distinct.push_back(c);
    b.index[static_cast<std::size_t>(j)] = it->second;
  }
  b.u.resize(t.u.rows(), static_cast<Eigen::Index>(distinct.size()));
  for (std::size_t k = 0; k < distinct.size(); ++k) b.u.col(static_cast<Eigen::Index>(k)) = t.u.col(distinct[k]);
  return b;
}

ad::Var pk_loss(ad::Tape& tape, ad::Var theta, const dict::Dictionary& dict, const koop::OperatorModel& model,
                const Batch& batch, double scale) {
  require_dims(model.dim() == dict.n_psi(), "pk_loss: operator and dictionary dimensions differ");
  require_dims(tape.value(theta).size() == dict.params().size() + model.param_count(),
               "pk_loss: parameter vector length mismatch");
  const Eigen::Index n = batch.size();
  Eigen::MatrixXd both(batch.x.rows(), 2 * n);
  both << batch.x, batch.y;
  const ad::Var psi = dict.lift(tape, theta, 0, both);
  const ad::Var psi_x = tape.col_block(psi, 0, n);
  const ad::Var psi_y = tape.col_block(psi, n, n);
  const ad::Var u = tape.constant(batch.u);
  const ad::Var pred = model.step(tape, theta, dict.params().size(), u, batch.index, psi_x);
  const ad::Var loss = tape.sum_squares(tape.sub(psi_y, pred));
  return scale == 1.0 ? loss : tape.scale(loss, scale);
}

double pk_loss(const dict::Dictionary& dict, const koop::OperatorModel& model, const Batch& batch) {
  ad::Tape tape;
  const ad::Var theta = tape.constant(concat(dict.params(), model.params()));
  return tape.scalar(pk_loss(tape, theta, dict, model, batch));
}

double mean_loss(const dict::Dictionary& dict, const koop::OperatorModel& model, const Transitions& data) {
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index first = 0; first < data.size(); first += kChunk) {
    const Eigen::Index count = std::min(kChunk, data.size() - first);
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(count));
    std::iota(cols.begin(), cols.end(), first);
    total += pk_loss(dict, model, Batch::from(data, cols));
  }
  return total / static_cast<double>(data.size());
}

void least_squares_fit(const Transitions& data, const dict::Dictionary& dict, koop::OperatorModel& model,
                       double ridge) {
  require_dims(model.dim() == dict.n_psi(), "least squares: operator and dictionary dimensions differ");
  require_dims(model.variant() != koop::Variant::Network, "least squares: network operators have no closed form");
  require_dims(data.u.rows() == model.n_u(), "least squares: parameter dimension mismatch");
  if (data.size() == 0) throw ConfigError("least squares: no transitions");
  Eigen::MatrixXd gram;
  Eigen::MatrixXd cross;
  for (Eigen::Index first = 0; first < data.size(); first += kChunk) {
    const Eigen::Index count = std::min(kChunk, data.size() - first);
    const Eigen::MatrixXd psi_x = dict.evaluate_batch(data.x.middleCols(first, count));
    const Eigen::MatrixXd psi_y = dict.evaluate_batch(data.y.middleCols(first, count));
    const Eigen::MatrixXd z = regressors(model, psi_x, data.u.middleCols(first, count));
    if (gram.size() == 0) {
      gram = Eigen::MatrixXd::Zero(z.rows(), z.rows());
      cross = Eigen::MatrixXd::Zero(psi_y.rows(), z.rows());
    }
    gram.selfadjointView<Eigen::Lower>().rankUpdate(z);
    cross.noalias() += psi_y * z.transpose();
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  store_solution(model, linalg::ridge_solve_gram(gram, cross, ridge));
}

koop::OperatorModel edmd_fit(const TrajectoryDataset& ds, const dict::Dictionary& dict, double ridge) {
  koop::OperatorModel model = koop::OperatorModel::constant(dict.n_psi(), ds.param_dim());
  least_squares_fit(flatten(ds), dict, model, ridge);
  return model;
}

FitReport train_joint(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                      const TrainingConfig& cfg, const EpochHook& hook) {
  cfg.validate();
  require_dims(model.dim() == dict.n_psi(), "training: operator and dictionary dimensions differ");
  require_dims(model.n_u() == ds.param_dim(), "training: parameter dimension mismatch");
  require_dims(dict.state_dim() == ds.state_dim(), "training: state dimension mismatch");
  const Split data = split(ds, cfg.validation_fraction);
  if (data.train.size() == 0) throw ConfigError("training: no transitions");
  const bool has_val = data.val.size() > 0;

  const Clock clock;
  FitReport report;
  Eigen::VectorXd theta = concat(dict.params(), model.params());
  Eigen::VectorXd best = theta;

  auto score = [&](double train_loss, double val_loss) { return has_val ? val_loss : train_loss; };
  {
    const double tl = mean_loss(dict, model, data.train);
    const double vl = has_val ? mean_loss(dict, model, data.val) : 0.0;
    report.best_loss = score(tl, vl);
    if (!std::isfinite(report.best_loss)) {
      report.diverged = true;
      report.message = "initial loss is not finite";
      report.dict_params = dict.params();
      report.model_params = model.params();
      return report;
    }
  }

  MinibatchRunner runner(data.train, cfg.batch_size, cfg.seed);
  optim::AdamState adam = optim::AdamState::fresh(theta.size(), cfg.learning_rate);
  Plateau plateau;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double weighted = 0.0;
    try {
      for (std::size_t b = 0; b < runner.batches_per_epoch(); ++b) {
        const Batch batch = runner.next();
        weighted += adam_batch(dict, model, batch, theta, theta.size(), adam) * static_cast<double>(batch.size());
      }
    } catch (const NumericalError& e) {
      report.diverged = true;
      report.message = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    const double tl = weighted / static_cast<double>(data.train.size());
    unpack(theta, dict, model);
    const double vl = has_val ? mean_loss(dict, model, data.val) : 0.0;
    report.history.push_back({epoch, tl, vl, clock.seconds()});
    if (!std::isfinite(tl) || !std::isfinite(vl)) {
      report.diverged = true;
      report.message = "epoch " + std::to_string(epoch) + ": loss is not finite";
      break;
    }
    if (hook) hook(report.history.back(), dict, model);
    if (score(tl, vl) < report.best_loss) {
      report.best_loss = score(tl, vl);
      report.best_epoch = epoch;
      best = theta;
    }
    if (plateau.update(tl, cfg.patience)) adam.learning_rate *= cfg.decay;
    if (tl <= cfg.tolerance) break;
  }
  unpack(best, dict, model);
  report.dict_params = dict.params();
  report.model_params = model.params();
  return report;
}

FitReport train_pknn(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                     const TrainingConfig& cfg, const EpochHook& hook) {
  if (model.variant() != koop::Variant::Network) throw ConfigError("pk-nn training needs a network operator");
  return train_joint(ds, dict, model, cfg, hook);
}

FitReport fit_alternating(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                          const TrainingConfig& cfg) {
  cfg.validate();
  const auto v = model.variant();
  if (v != koop::Variant::Constant && v != koop::Variant::Affine && v != koop::Variant::Bilinear) {
    throw ConfigError("alternating fit supports constant, affine and bilinear operators");
  }
  require_dims(model.n_u() == ds.param_dim(), "training: parameter dimension mismatch");
  require_dims(dict.state_dim() == ds.state_dim(), "training: state dimension mismatch");
  const Split data = split(ds, cfg.validation_fraction);
  if (data.train.size() == 0) throw ConfigError("training: no transitions");
  const bool has_val = data.val.size() > 0;

  const Clock clock;
  FitReport report;
  auto record = [&](int round) {
    const double tl = mean_loss(dict, model, data.train);
    const double vl = has_val ? mean_loss(dict, model, data.val) : 0.0;
    if (round > 0) report.history.push_back({round, tl, vl, clock.seconds()});
    return std::pair{tl, has_val ? vl : tl};
  };

  // Round 1 is the least-squares start; later rounds train the dictionary first.
  least_squares_fit(data.train, dict, model, cfg.ridge);
  auto [tl0, s0] = record(std::min(cfg.epochs, 1));
  report.best_epoch = std::min(cfg.epochs, 1);
  report.best_loss = s0;
  Eigen::VectorXd best_dict = dict.params();
  Eigen::VectorXd best_model = model.params();

  if (dict.trainable() && cfg.inner_steps > 0) {
    MinibatchRunner runner(data.train, cfg.batch_size, cfg.seed);
    const Eigen::Index nd = dict.params().size();
    optim::AdamState adam = optim::AdamState::fresh(nd, cfg.learning_rate);
    Plateau plateau;
    plateau.best = tl0;
    for (int round = 2; round <= cfg.epochs; ++round) {
      Eigen::VectorXd theta = concat(dict.params(), model.params());
      try {
        for (int s = 0; s < cfg.inner_steps; ++s) adam_batch(dict, model, runner.next(), theta, nd, adam);
        unpack(theta, dict, model);
        least_squares_fit(data.train, dict, model, cfg.ridge);
      } catch (const NumericalError& e) {
        report.diverged = true;
        report.message = "round " + std::to_string(round) + ": " + e.what();
        break;
      }
      const auto [tl, s] = record(round);
      if (!std::isfinite(s)) {
        report.diverged = true;
        report.message = "round " + std::to_string(round) + ": loss is not finite";
        break;
      }
      if (s < report.best_loss) {
        report.best_loss = s;
        report.best_epoch = round;
        best_dict = dict.params();
        best_model = model.params();
      }
      if (plateau.update(tl, cfg.patience)) adam.learning_rate *= cfg.decay;
      if (tl <= cfg.tolerance) break;
    }
  }
  dict.params() = best_dict;
  model.params() = best_model;
  report.dict_params = best_dict;
  report.model_params = best_model;
  return report;
}

FitReport fit_poly(const TrajectoryDataset& ds, dict::Dictionary& dict, koop::OperatorModel& model,
                   const TrainingConfig& cfg) {
  cfg.validate();
  if (model.variant() != koop::Variant::Poly) throw ConfigError("polynomial fit needs a polynomial operator");
  require_dims(model.n_u() == ds.param_dim(), "training: parameter dimension mismatch");
  const Split data = split(ds, cfg.validation_fraction);
  if (data.train.size() == 0) throw ConfigError("training: no transitions");
  least_squares_fit(data.train, dict, model, cfg.ridge);
  if (dict.trainable()) return train_joint(ds, dict, model, cfg);

  const Clock clock;
  FitReport report;
  const double tl = mean_loss(dict, model, data.train);
  const double vl = data.val.size() > 0 ? mean_loss(dict, model, data.val) : 0.0;
  report.history.push_back({1, tl, vl, clock.seconds()});
  report.best_epoch = 1;
  report.best_loss = data.val.size() > 0 ? vl : tl;
  report.dict_params = dict.params();
  report.model_params = model.params();
  return report;
}

}  // namespace pk::train
