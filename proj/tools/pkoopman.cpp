// pkoopman: data generation, training, evaluation and control from a config file.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 other.

#include "pk/checkpoint.hpp"
#include "pk/error.hpp"
#include "pk/experiment.hpp"
#include "pk/parallel.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

namespace fs = std::filesystem;
using pk::app::ExperimentConfig;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment configuration file");
  if (needs_config) opt->required();
  cmd->add_option("--seed", c.seed, "override the top-level seed");
  cmd->add_option("--threads", c.threads, "worker thread cap (0 = all cores)");
  cmd->add_option("--out", c.out, "output path")->required();
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = ExperimentConfig::load(c.config);
  if (c.seed) cfg.reseed(*c.seed);
  cfg.set_threads(c.threads);
  if (c.threads > 0) pk::thread_cap() = c.threads;
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw pk::ConfigError("cannot open '" + path + "' for writing");
  return out;
}

void check_system(const ExperimentConfig& cfg, const pk::TrajectoryDataset& ds, const std::string& what) {
  if (pk::describe(ds.system) != pk::describe(cfg.system)) {
    throw pk::ConfigError(what + " was generated for " + pk::describe(ds.system).dump() + ", config has " +
                          pk::describe(cfg.system).dump());
  }
}

pk::train::FitReport strip_timing(pk::train::FitReport r, bool timing) {
  if (!timing) {
    for (auto& e : r.history) e.seconds = 0.0;
  }
  return r;
}

void write_loss(const pk::app::FitResult& fit, bool timing, const std::string& path) {
  auto out = open_out(path);
  pk::train::write_loss_csv(strip_timing(fit.combined(), timing), out);
}

int cmd_generate(const Common& c, const std::string& split) {
  const ExperimentConfig cfg = load_config(c);
  const bool test = split == "test";
  const pk::TrajectoryDataset ds = pk::app::generate_data(cfg, test);
  pk::save_dataset(ds, c.out);
  std::cout << "wrote " << c.out << ": system " << ds.system.name() << ", M " << ds.trajectories() << ", N "
            << ds.steps() << ", state_dim " << ds.state_dim() << ", param_dim " << ds.param_dim() << ", dt " << ds.dt
            << ", seed " << ds.seed << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& data, std::string loss_path) {
  const ExperimentConfig cfg = load_config(c);
  const pk::TrajectoryDataset ds = pk::load_dataset(data);
  check_system(cfg, ds, "dataset '" + data + "'");
  if (loss_path.empty()) loss_path = c.out + ".loss.csv";

  pk::train::EpochHook hook;
  const int every = cfg.training.checkpoint_every;
  if (every > 0) {
    hook = [&](const pk::train::EpochRecord& e, const pk::dict::Dictionary& d, const pk::koop::OperatorModel& op) {
      if (e.epoch % every != 0) return;
      pk::app::FitResult partial;
      partial.predictor = pk::eval::Predictor::single(pk::app::to_string(cfg.model.kind), d, op);
      pk::ckpt::save(pk::app::make_checkpoint(cfg, partial), c.out + ".epoch" + std::to_string(e.epoch));
    };
  }
  const pk::app::FitResult fit = pk::app::fit(cfg, ds, hook);
  pk::ckpt::save(pk::app::make_checkpoint(cfg, fit), c.out);
  write_loss(fit, cfg.timing, loss_path);
  const auto rep = fit.combined();
  std::cout << "wrote " << c.out << " (" << fit.predictor.members.size() << " model"
            << (fit.predictor.members.size() == 1 ? "" : "s") << ", " << rep.history.size() << " epochs) and "
            << loss_path << "\n";
  if (rep.diverged) {
    std::cerr << "warning: training diverged: " << rep.message << "\n";
    return 3;
  }
  return 0;
}

std::vector<pk::eval::Predictor> load_predictors(const std::vector<std::string>& paths) {
  std::vector<pk::eval::Predictor> out;
  for (const auto& p : paths) {
    pk::ckpt::Checkpoint k = pk::ckpt::load(p);
    if (std::any_of(out.begin(), out.end(), [&](const auto& q) { return q.name == k.predictor.name; })) {
      k.predictor.name += "_" + std::to_string(out.size());
    }
    out.push_back(std::move(k.predictor));
  }
  return out;
}

int cmd_predict(const Common& c, const std::string& ckpt_path, const std::string& data) {
  const ExperimentConfig cfg = load_config(c);
  const pk::TrajectoryDataset ds = pk::load_dataset(data);
  check_system(cfg, ds, "dataset '" + data + "'");
  const auto preds = load_predictors({ckpt_path});
  auto out = open_out(c.out);
  pk::eval::write_prediction_csv(preds.front(), ds, cfg.evaluation.resubstitute, out);
  std::cout << "wrote " << c.out << "\n";
  return 0;
}

int cmd_evaluate(const Common& c, const std::vector<std::string>& ckpts, const std::string& data,
                 std::string errors_path) {
  const ExperimentConfig cfg = load_config(c);
  const pk::TrajectoryDataset ds = pk::load_dataset(data);
  check_system(cfg, ds, "dataset '" + data + "'");
  const auto res = pk::eval::evaluate_suite(load_predictors(ckpts), ds, cfg.evaluation.resubstitute, c.threads);
  {
    auto out = open_out(c.out);
    pk::eval::write_summary_csv(res, out);
  }
  if (errors_path.empty()) errors_path = c.out + ".errors.csv";
  {
    auto out = open_out(errors_path);
    pk::eval::write_error_csv(res, out);
  }
  for (const auto& row : res.rows) {
    std::cout << row.name << ": mean E(t_" << row.mean.size() << ") = " << row.final_mean() << "\n";
  }
  return 0;
}

int cmd_control(const Common& c, const std::string& ckpt_path) {
  const ExperimentConfig cfg = load_config(c);
  const pk::ckpt::Checkpoint k = pk::ckpt::load(ckpt_path);
  if (k.predictor.members.size() != 1) throw pk::ConfigError("control needs a single-model checkpoint");
  const auto& m = k.predictor.members.front();
  const pk::ctrl::TrackingProblem prob = pk::app::tracking_problem(cfg);
  pk::ctrl::ControlResult res = pk::ctrl::closed_loop(prob, m.dict, m.op, cfg.system);
  if (!cfg.timing) std::fill(res.seconds.begin(), res.seconds.end(), 0.0);
  auto out = open_out(c.out);
  pk::ctrl::write_control_csv(res, out);
  std::cout << "wrote " << c.out << ": " << res.completed << " of " << prob.steps << " steps";
  if (res.completed > 0) {
    std::cout << ", final tracked " << res.tracked.col(res.completed).transpose() << " vs reference "
              << res.reference.col(res.completed).transpose();
  }
  std::cout << "\n";
  if (!res.message.empty()) {
    std::cerr << "error: " << res.message << "\n";
    return 3;
  }
  return 0;
}

int cmd_controllability(const Common& c, const std::string& ckpt_path, std::optional<Eigen::Index> samples) {
  const ExperimentConfig cfg = load_config(c);
  const pk::ckpt::Checkpoint k = pk::ckpt::load(ckpt_path);
  if (k.predictor.members.size() != 1) throw pk::ConfigError("controllability needs a single-model checkpoint");
  const auto& op = k.predictor.members.front().op;
  const auto box = pk::app::parameter_box(cfg.control, op.n_u());
  const auto rep = pk::ctrl::controllability(op, k.dt, box, samples.value_or(cfg.control.samples), cfg.control.seed,
                                             cfg.control.threshold, c.threads);
  auto out = open_out(c.out);
  pk::ctrl::write_singular_values_csv(rep, out);
  std::cout << "rank " << rep.rank << " of required " << rep.required_rank << " over " << rep.samples
            << " samples: " << (rep.controllable() ? "controllable" : "not controllable") << "\n";
  return 0;
}

int cmd_sweep(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  const auto cells = pk::app::sweep_cells(cfg);
  if (cells.empty()) throw pk::ConfigError(c.config + ": no [sweep] axes");
  fs::create_directories(c.out);
  auto summary = open_out((fs::path(c.out) / "summary.csv").string());
  summary << "cell";
  for (const auto& a : cfg.sweep) summary << ',' << a.section << '.' << a.key;
  summary << ",model,final_mean,final_stddev,best_loss,epochs,seconds\n";
  summary.precision(17);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    ExperimentConfig cell = cells[i].config;
    if (c.seed) cell.reseed(*c.seed);
    cell.set_threads(c.threads);
    const auto train = pk::app::generate_data(cell, false);
    const auto test = pk::app::generate_data(cell, true);
    const auto fit = pk::app::fit(cell, train);
    const std::string stem = (fs::path(c.out) / ("cell" + std::to_string(i))).string();
    pk::ckpt::save(pk::app::make_checkpoint(cell, fit), stem + ".ckpt");
    write_loss(fit, cell.timing, stem + ".loss.csv");
    const auto res = pk::eval::evaluate_suite({fit.predictor}, test, cell.evaluation.resubstitute, c.threads);
    const auto& row = res.rows.front();
    const auto rep = fit.combined();
    double best = 0.0;
    for (const auto& r : fit.reports) best += r.best_loss / static_cast<double>(fit.reports.size());
    summary << i;
    for (const auto& v : cells[i].values) {
      std::string s = std::holds_alternative<std::string>(v.data) ? v.as_string() : pk::cfg::serialize(v);
      if (s.find(',') != std::string::npos) s = '"' + s + '"';
      summary << ',' << s;
    }
    summary << ',' << row.name << ',' << row.final_mean() << ',' << row.stddev(row.stddev.size() - 1) << ',' << best
            << ',' << (rep.history.empty() ? 0 : rep.history.back().epoch) << ','
            << (cell.timing ? fit.seconds : 0.0) << '\n';
    std::cout << "cell " << i << ": mean E(t_N) = " << row.final_mean() << "\n";
  }
  std::cout << "wrote " << cells.size() << " cells to " << c.out << "\n";
  return 0;
}

int cmd_export(const std::string& data, const std::string& out_path) {
  const pk::TrajectoryDataset ds = pk::load_dataset(data);
  auto out = open_out(out_path);
  pk::export_csv(ds, out);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric Koopman models: data, training, evaluation and control"};
  app.require_subcommand(1);

  Common gen, trn, prd, evl, con, cab, swp;
  std::string split = "train";
  auto* g = app.add_subcommand("generate-data", "simulate a dataset from the [sampling] or [test] block");
  add_common(g, gen);
  g->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));

  std::string train_data, loss_path;
  auto* t = app.add_subcommand("train", "fit the configured model; writes a checkpoint and a loss CSV");
  add_common(t, trn);
  t->add_option("--data", train_data, "training dataset")->required();
  t->add_option("--loss", loss_path, "loss CSV path (default: <out>.loss.csv)");

  std::string pred_ckpt, pred_data;
  auto* p = app.add_subcommand("predict", "roll a checkpoint over a dataset; writes truth and prediction CSV");
  add_common(p, prd);
  p->add_option("--checkpoint", pred_ckpt, "model checkpoint")->required();
  p->add_option("--data", pred_data, "test dataset")->required();

  std::vector<std::string> eval_ckpts;
  std::string eval_data, errors_path;
  auto* e = app.add_subcommand("evaluate", "relative error curves of one or more checkpoints");
  add_common(e, evl);
  e->add_option("--checkpoint", eval_ckpts, "model checkpoint (repeatable)")->required();
  e->add_option("--data", eval_data, "test dataset")->required();
  e->add_option("--errors", errors_path, "per-trajectory CSV path (default: <out>.errors.csv)");

  std::string ctrl_ckpt;
  auto* c = app.add_subcommand("control", "closed-loop tracking against the true plant");
  add_common(c, con);
  c->add_option("--checkpoint", ctrl_ckpt, "model checkpoint")->required();

  std::string cab_ckpt;
  std::optional<Eigen::Index> cab_samples;
  auto* k = app.add_subcommand("controllability", "singular values of the sampled generator matrix");
  add_common(k, cab);
  k->add_option("--checkpoint", cab_ckpt, "model checkpoint")->required();
  k->add_option("--samples", cab_samples, "parameter samples (default: [control] samples)");

  auto* s = app.add_subcommand("sweep", "train and evaluate every [sweep] cell; writes one checkpoint per cell");
  add_common(s, swp);

  std::string exp_data, exp_out;
  auto* x = app.add_subcommand("export-csv", "dump a dataset as one CSV row per transition");
  x->add_option("--data", exp_data, "dataset")->required();
  x->add_option("--out", exp_out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) return cmd_generate(gen, split);
    if (*t) return cmd_train(trn, train_data, loss_path);
    if (*p) return cmd_predict(prd, pred_ckpt, pred_data);
    if (*e) return cmd_evaluate(evl, eval_ckpts, eval_data, errors_path);
    if (*c) return cmd_control(con, ctrl_ckpt);
    if (*k) return cmd_controllability(cab, cab_ckpt, cab_samples);
    if (*s) return cmd_sweep(swp);
    if (*x) return cmd_export(exp_data, exp_out);
  } catch (const pk::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const pk::DimensionError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const pk::NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
