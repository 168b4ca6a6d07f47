#include "pk/experiment.hpp"

#include "pk/error.hpp"

#include <array>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pk::app {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::M0: return "m0";
    case ModelKind::M1: return "m1";
    case ModelKind::M2: return "m2";
    case ModelKind::M3: return "m3";
    case ModelKind::M4: return "m4";
    case ModelKind::PkNn: return "pknn";
  }
  return "pknn";
}

ModelKind model_kind_from_string(const std::string& s) {
  for (auto k : {ModelKind::M0, ModelKind::M1, ModelKind::M2, ModelKind::M3, ModelKind::M4, ModelKind::PkNn}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown model kind '" + s + "' (expected m0, m1, m2, m3, m4 or pknn)");
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"", {"seed", "timing"}},
      {"system", {"name", "mu", "nx", "control_dim", "forcing"}},
      {"sampling",
       {"trajectories", "parameters", "trajectories_per_parameter", "steps", "dt", "seed", "rk23_tol"}},
      {"test", {"trajectories", "parameters", "trajectories_per_parameter", "steps", "seed", "rk23_tol"}},
      {"dictionary", {"observable", "tail", "n_psi", "hidden", "centers", "scale", "seed"}},
      {"model", {"kind", "hidden", "fixed_first_row", "identity_start", "degree", "seed"}},
      {"training",
       {"batch_size", "epochs", "learning_rate", "patience", "decay", "ridge", "validation_fraction", "seed",
        "tolerance", "inner_steps", "checkpoint_every"}},
      {"evaluation", {"resubstitute"}},
      {"control",
       {"observables", "lambda", "horizon", "steps", "levels", "switch_at", "reference_file", "box_lower",
        "box_upper", "initial_state", "plant_tol", "max_iter", "tol", "samples", "seed", "threshold"}},
      {"sweep", {"mode"}},
  };
  return keys;
}

void check_keys(const cfg::Document& d) {
  const auto& known = known_keys();
  for (const auto& [name, table] : d.sections) {
    const auto it = known.find(name);
    if (it == known.end()) throw ConfigError(d.source + ": unknown section [" + name + "]");
    for (const auto& [key, value] : table) {
      if (name == "sweep" && key != "mode") continue;
      if (it->second.count(key) == 0) throw ConfigError(d.where(name, key) + ": unknown key");
    }
  }
}

std::vector<Eigen::Index> indices(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

dyn::System read_system(const cfg::Document& d) {
  nlohmann::json j;
  if (!d.has("system", "name")) throw ConfigError(d.source + ": missing [system] name");
  j["name"] = d.text("system", "name", "");
  if (d.has("system", "mu")) j["mu"] = d.number("system", "mu", 1.0);
  if (d.has("system", "nx")) j["nx"] = d.integer("system", "nx", 0);
  if (d.has("system", "control_dim")) j["control_dim"] = d.integer("system", "control_dim", 1);
  if (d.has("system", "forcing")) j["forcing"] = d.text("system", "forcing", "sin");
  try {
    return system_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(d.where("system", "name") + ": " + e.what());
  }
}

SamplingSpec read_sampling(const cfg::Document& d, const std::string& section, const SamplingSpec& base,
                           std::uint64_t seed) {
  SamplingSpec s = base;
  s.trajectories_per_parameter = d.integer(section, "trajectories_per_parameter", base.trajectories_per_parameter);
  if (d.has(section, "parameters")) {
    if (d.has(section, "trajectories")) {
      throw ConfigError(d.where(section, "parameters") + ": give either trajectories or parameters, not both");
    }
    s.trajectories = d.integer(section, "parameters", 1) * s.trajectories_per_parameter;
  } else {
    s.trajectories = d.integer(section, "trajectories", base.trajectories);
  }
  s.steps = d.integer(section, "steps", base.steps);
  if (section == "sampling") s.dt = d.number(section, "dt", base.dt);
  s.rk23_tol = d.number(section, "rk23_tol", base.rk23_tol);
  s.seed = static_cast<std::uint64_t>(d.integer(section, "seed", static_cast<std::int64_t>(seed)));
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(d.source + ": [" + section + "] " + e.what());
  }
  return s;
}

dict::Tail tail_from_string(const cfg::Document& d) {
  const std::string t = d.text("dictionary", "tail", "network");
  if (t == "network") return dict::Tail::Network;
  if (t == "rbf") return dict::Tail::Rbf;
  if (t == "none") return dict::Tail::None;
  throw ConfigError(d.where("dictionary", "tail") + ": expected network, rbf or none");
}

std::vector<std::vector<double>> read_levels(const cfg::Document& d) {
  if (!d.has("control", "levels")) return {};
  const cfg::Value& v = d.at("control", "levels");
  std::vector<std::vector<double>> rows;
  try {
    const cfg::Array& a = v.as_array();
    if (!a.empty() && std::holds_alternative<cfg::Array>(a.front().data)) {
      for (const auto& row : a) {
        std::vector<double> r;
        for (const auto& x : row.as_array()) r.push_back(x.as_double());
        rows.push_back(std::move(r));
      }
    } else {
      std::vector<double> r;
      for (const auto& x : a) r.push_back(x.as_double());
      rows.push_back(std::move(r));
    }
  } catch (const ConfigError& e) {
    throw ConfigError(d.where("control", "levels") + ": " + e.what());
  }
  return rows;
}

template <class F>
void in_block(const cfg::Document& d, const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(d.source, 0) == 0) throw;
    throw ConfigError(d.source + ": [" + section + "] " + what);
  } catch (const DimensionError& e) {
    throw ConfigError(d.source + ": [" + section + "] " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_document(cfg::Document doc) {
  check_keys(doc);
  ExperimentConfig c;
  const auto& d = doc;
  const auto seed = static_cast<std::uint64_t>(d.integer("", "seed", 0));
  c.timing = d.flag("", "timing", false);
  c.system = read_system(d);

  c.sampling = read_sampling(d, "sampling", SamplingSpec{}, seed);
  SamplingSpec test_base = c.sampling;
  test_base.trajectories = std::max<Eigen::Index>(1, c.sampling.trajectories / 10);
  test_base.trajectories_per_parameter = 1;
  c.test = read_sampling(d, "test", test_base, seed + 7919);

  in_block(d, "dictionary", [&] {
    auto& s = c.dictionary;
    s.observable = dict::observable_from_string(d.text("dictionary", "observable", "identity"));
    s.tail = tail_from_string(d);
    s.n_psi = d.integer("dictionary", "n_psi", 0);
    s.hidden = indices(d.integers("dictionary", "hidden", {64, 64}));
    s.rbf_centers = d.integer("dictionary", "centers", 0);
    s.scale = d.flag("dictionary", "scale", false);
    s.seed = static_cast<std::uint64_t>(d.integer("dictionary", "seed", static_cast<std::int64_t>(seed + 1)));
    if (s.tail == dict::Tail::Network && s.n_psi < 1) throw ConfigError("network dictionaries need n_psi");
    if (s.tail == dict::Tail::Rbf && s.rbf_centers < 1) throw ConfigError("rbf dictionaries need centers >= 1");
  });

  in_block(d, "model", [&] {
    auto& s = c.model;
    s.kind = model_kind_from_string(d.text("model", "kind", "pknn"));
    s.hidden = indices(d.integers("model", "hidden", {64}));
    s.fixed_first_row = d.flag("model", "fixed_first_row", true);
    s.identity_start = d.flag("model", "identity_start", false);
    s.degree = static_cast<int>(d.integer("model", "degree", 3));
    s.seed = static_cast<std::uint64_t>(d.integer("model", "seed", static_cast<std::int64_t>(seed + 2)));
    if (s.degree < 0) throw ConfigError("degree must be >= 0");
  });

  in_block(d, "training", [&] {
    auto& t = c.training;
    t.batch_size = d.integer("training", "batch_size", t.batch_size);
    t.epochs = static_cast<int>(d.integer("training", "epochs", t.epochs));
    t.learning_rate = d.number("training", "learning_rate", t.learning_rate);
    t.patience = static_cast<int>(d.integer("training", "patience", t.patience));
    t.decay = d.number("training", "decay", t.decay);
    t.ridge = d.number("training", "ridge", t.ridge);
    t.validation_fraction = d.number("training", "validation_fraction", t.validation_fraction);
    t.seed = static_cast<std::uint64_t>(d.integer("training", "seed", static_cast<std::int64_t>(seed + 3)));
    t.tolerance = d.number("training", "tolerance", t.tolerance);
    t.inner_steps = static_cast<int>(d.integer("training", "inner_steps", t.inner_steps));
    t.checkpoint_every = static_cast<int>(d.integer("training", "checkpoint_every", t.checkpoint_every));
    t.validate();
  });

  c.evaluation.resubstitute = d.flag("evaluation", "resubstitute", false);

  in_block(d, "control", [&] {
    auto& s = c.control;
    s.observables = indices(d.integers("control", "observables", {0}));
    s.lambda = d.number("control", "lambda", 0.0);
    s.horizon = static_cast<int>(d.integer("control", "horizon", 10));
    s.steps = static_cast<int>(d.integer("control", "steps", 0));
    s.levels = read_levels(d);
    for (auto v : d.integers("control", "switch_at", {})) s.switch_at.push_back(static_cast<int>(v));
    s.reference_file = d.text("control", "reference_file", "");
    s.box_lower = d.numbers("control", "box_lower", {-1.0});
    s.box_upper = d.numbers("control", "box_upper", {1.0});
    s.initial_state = d.numbers("control", "initial_state", {0.0});
    s.plant_tol = d.number("control", "plant_tol", 1e-8);
    s.optimizer.max_iter = static_cast<int>(d.integer("control", "max_iter", 200));
    s.optimizer.tol = d.number("control", "tol", 1e-9);
    s.samples = d.integer("control", "samples", 2000);
    s.seed = static_cast<std::uint64_t>(d.integer("control", "seed", static_cast<std::int64_t>(seed + 4)));
    s.threshold = d.number("control", "threshold", 1e-6);
    if (s.lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (s.horizon < 1) throw ConfigError("horizon must be >= 1");
    if (s.steps < 0) throw ConfigError("steps must be >= 0");
    if (s.samples < 1) throw ConfigError("samples must be >= 1");
    if (!s.reference_file.empty() && !std::ifstream(s.reference_file)) {
      throw ConfigError(d.where("control", "reference_file") + ": cannot open '" + s.reference_file + "'");
    }
    for (const auto& row : s.levels) {
      if (row.size() != s.switch_at.size() + 1) throw ConfigError("each levels row needs switch_at.size() + 1 values");
    }
  });

  if (const cfg::Table* sw = d.section("sweep")) {
    const std::string mode = d.text("sweep", "mode", "grid");
    if (mode != "grid" && mode != "zip") throw ConfigError(d.where("sweep", "mode") + ": expected grid or zip");
    c.sweep_zip = mode == "zip";
    for (const auto& [key, value] : *sw) {
      if (key == "mode") continue;
      const auto dot = key.find('.');
      if (dot == std::string::npos) throw ConfigError(d.where("sweep", key) + ": expected section.key");
      SweepAxis axis{key.substr(0, dot), key.substr(dot + 1), {}};
      const auto known = known_keys().find(axis.section);
      if (axis.section == "sweep" || known == known_keys().end() || known->second.count(axis.key) == 0) {
        throw ConfigError(d.where("sweep", key) + ": not a configurable key");
      }
      if (!std::holds_alternative<cfg::Array>(value.data) || value.as_array().empty()) {
        throw ConfigError(d.where("sweep", key) + ": expected a non-empty array of values");
      }
      axis.values = value.as_array();
      if (c.sweep_zip && !c.sweep.empty() && axis.values.size() != c.sweep.front().values.size()) {
        throw ConfigError(d.where("sweep", key) + ": zip axes need equal lengths");
      }
      c.sweep.push_back(std::move(axis));
    }
  }

  // Cross-block dimensions.
  if (c.dictionary.observable == dict::Observable::MassMomentum && !c.system.as<dyn::Kdv>()) {
    throw ConfigError(d.where("dictionary", "observable") + ": mass_momentum needs the kdv system");
  }
  const Eigen::Index n_obs = c.dictionary.observable == dict::Observable::Identity ? c.system.state_dim() : 2;
  if (c.dictionary.tail == dict::Tail::Network && c.dictionary.n_psi < 1 + n_obs) {
    throw ConfigError(d.where("dictionary", "n_psi") + ": must be at least " + std::to_string(1 + n_obs));
  }
  for (auto o : c.control.observables) {
    if (o < 0 || o >= n_obs) throw ConfigError(d.where("control", "observables") + ": index out of range");
  }
  const auto nu = static_cast<std::size_t>(c.system.param_dim());
  for (const auto* b : {&c.control.box_lower, &c.control.box_upper}) {
    if (b->size() != 1 && b->size() != nu) {
      throw ConfigError(d.source + ": [control] box bounds need 1 or " + std::to_string(nu) + " values");
    }
  }
  const auto sd = static_cast<std::size_t>(c.system.state_dim());
  if (c.control.initial_state.size() != 1 && c.control.initial_state.size() != sd) {
    throw ConfigError(d.where("control", "initial_state") + ": needs 1 or " + std::to_string(sd) + " values");
  }
  if (!c.control.levels.empty() && c.control.levels.size() != c.control.observables.size()) {
    throw ConfigError(d.where("control", "levels") + ": one row per tracked observable");
  }
  c.document = std::move(doc);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) { return from_document(cfg::load(path)); }

void ExperimentConfig::reseed(std::uint64_t seed) {
  document.set("", "seed", cfg::Value(static_cast<std::int64_t>(seed)));
  *this = from_document(document);
}

void ExperimentConfig::set_threads(std::size_t threads) {
  sampling.threads = threads;
  test.threads = threads;
}

TrajectoryDataset generate_data(const ExperimentConfig& c, bool test_split) {
  return generate(c.system, test_split ? c.test : c.sampling);
}

train::FitReport FitResult::combined() const {
  if (reports.size() == 1) return reports.front();
  train::FitReport out;
  std::map<int, std::array<double, 4>> acc;
  for (const auto& r : reports) {
    for (const auto& e : r.history) {
      auto& a = acc[e.epoch];
      a[0] += e.train_loss;
      a[1] += e.val_loss;
      a[2] = std::max(a[2], e.seconds);
      a[3] += 1.0;
    }
    out.diverged = out.diverged || r.diverged;
    if (out.message.empty()) out.message = r.message;
  }
  for (const auto& [epoch, a] : acc) out.history.push_back({epoch, a[0] / a[3], a[1] / a[3], a[2]});
  return out;
}

dict::Dictionary build_dictionary(const DictionarySpec& spec, const TrajectoryDataset& data) {
  const Eigen::Index sd = data.state_dim();
  Eigen::MatrixXd states(sd, data.transitions() + data.trajectories());
  Eigen::Index col = 0;
  for (const auto& x : data.states) {
    states.middleCols(col, x.cols()) = x;
    col += x.cols();
  }
  dict::Dictionary d;
  switch (spec.tail) {
    case dict::Tail::None: d = dict::Dictionary::prefix_only(spec.observable, sd); break;
    case dict::Tail::Network:
      d = dict::Dictionary::network(spec.observable, sd, spec.n_psi, spec.hidden, spec.seed);
      break;
    case dict::Tail::Rbf: d = dict::Dictionary::rbf(spec.observable, states, spec.rbf_centers, spec.seed); break;
  }
  if (spec.scale && spec.tail == dict::Tail::Network) d.set_scaler(dict::Scaler::fit(states));
  return d;
}

namespace {

koop::OperatorModel make_operator(const ModelSpec& m, Eigen::Index d, Eigen::Index nu) {
  switch (m.kind) {
    case ModelKind::M0:
    case ModelKind::M1: return koop::OperatorModel::constant(d, nu);
    case ModelKind::M2: return koop::OperatorModel::affine(d, nu);
    case ModelKind::M3: return koop::OperatorModel::bilinear(d, nu);
    case ModelKind::M4: return koop::OperatorModel::poly(d, nu, m.degree);
    case ModelKind::PkNn: return koop::OperatorModel::network(d, nu, m.hidden, m.seed, m.fixed_first_row, m.identity_start);
  }
  throw ConfigError("unknown model kind");
}

train::FitReport fit_member(const ExperimentConfig& c, const TrajectoryDataset& data, dict::Dictionary& dict,
                            koop::OperatorModel& op, const train::EpochHook& hook) {
  switch (c.model.kind) {
    case ModelKind::M0:
    case ModelKind::M1:
      if (dict.trainable()) return train::train_joint(data, dict, op, c.training, hook);
      return train::fit_alternating(data, dict, op, c.training);
    case ModelKind::M2:
    case ModelKind::M3: return train::fit_alternating(data, dict, op, c.training);
    case ModelKind::M4: return train::fit_poly(data, dict, op, c.training);
    case ModelKind::PkNn: return train::train_pknn(data, dict, op, c.training, hook);
  }
  throw ConfigError("unknown model kind");
}

// Trajectories grouped by their mean parameter, in first-seen order.
std::vector<std::pair<Eigen::VectorXd, std::vector<Eigen::Index>>> parameter_groups(const TrajectoryDataset& ds) {
  std::vector<std::pair<Eigen::VectorXd, std::vector<Eigen::Index>>> groups;
  std::map<std::vector<double>, std::size_t> where;
  for (Eigen::Index m = 0; m < ds.trajectories(); ++m) {
    const Eigen::VectorXd key = ds.params[static_cast<std::size_t>(m)].rowwise().mean();
    const std::vector<double> k(key.data(), key.data() + key.size());
    const auto [it, fresh] = where.emplace(k, groups.size());
    if (fresh) groups.push_back({key, {}});
    groups[it->second].second.push_back(m);
  }
  return groups;
}

TrajectoryDataset subset(const TrajectoryDataset& ds, const std::vector<Eigen::Index>& rows) {
  TrajectoryDataset out;
  out.system = ds.system;
  out.dt = ds.dt;
  out.seed = ds.seed;
  for (auto m : rows) {
    out.states.push_back(ds.states[static_cast<std::size_t>(m)]);
    out.params.push_back(ds.params[static_cast<std::size_t>(m)]);
  }
  return out;
}

}  // namespace

FitResult fit(const ExperimentConfig& c, const TrajectoryDataset& train, const train::EpochHook& hook) {
  train.validate();
  require_dims(train.system.name() == c.system.name() && train.state_dim() == c.system.state_dim() &&
                   train.param_dim() == c.system.param_dim(),
               "fit: dataset does not match the configured system");
  const auto start = std::chrono::steady_clock::now();
  FitResult r;
  r.predictor.name = to_string(c.model.kind);
  const Eigen::Index nu = c.system.param_dim();

  if (c.model.kind == ModelKind::M1) {
    for (const auto& [key, rows] : parameter_groups(train)) {
      const TrajectoryDataset part = subset(train, rows);
      dict::Dictionary d = build_dictionary(c.dictionary, part);
      koop::OperatorModel op = make_operator(c.model, d.n_psi(), nu);
      r.reports.push_back(fit_member(c, part, d, op, {}));
      r.predictor.members.push_back({std::move(d), std::move(op)});
      r.predictor.keys.push_back(key);
    }
  } else {
    DictionarySpec spec = c.dictionary;
    if (c.model.kind == ModelKind::M0) spec.tail = dict::Tail::None;
    dict::Dictionary d = build_dictionary(spec, train);
    koop::OperatorModel op = make_operator(c.model, d.n_psi(), nu);
    r.reports.push_back(fit_member(c, train, d, op, hook));
    r.predictor.members.push_back({std::move(d), std::move(op)});
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

ckpt::Checkpoint make_checkpoint(const ExperimentConfig& c, const FitResult& result) {
  ckpt::Checkpoint k;
  k.predictor = result.predictor;
  k.system = c.system;
  k.dt = c.sampling.dt;
  k.kind = to_string(c.model.kind);
  k.provenance = ckpt::fingerprint(cfg::serialize(c.document));
  const train::FitReport rep = result.combined();
  nlohmann::json extra;
  extra["members"] = result.reports.size();
  extra["epochs_run"] = rep.history.empty() ? 0 : rep.history.back().epoch;
  extra["final_train_loss"] = rep.history.empty() ? 0.0 : rep.history.back().train_loss;
  double best = 0.0;
  for (const auto& r : result.reports) best += r.best_loss / static_cast<double>(result.reports.size());
  extra["best_loss"] = best;
  extra["diverged"] = rep.diverged;
  if (!rep.message.empty()) extra["message"] = rep.message;
  k.extra = extra;
  return k;
}

Eigen::MatrixXd control_reference(const ControlSpec& spec) {
  const auto rows = static_cast<Eigen::Index>(spec.observables.size());
  Eigen::MatrixXd r(rows, spec.steps + 1);
  if (!spec.reference_file.empty()) {
    std::ifstream in(spec.reference_file);
    if (!in) throw ConfigError("cannot open reference file '" + spec.reference_file + "'");
    std::string line;
    std::getline(in, line);
    for (int n = 0; n <= spec.steps; ++n) {
      if (!std::getline(in, line)) {
        throw ConfigError("reference file '" + spec.reference_file + "' has fewer than " +
                          std::to_string(spec.steps + 1) + " rows");
      }
      std::istringstream cells(line);
      std::string cell;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (!std::getline(cells, cell, ',')) {
          throw ConfigError("reference file '" + spec.reference_file + "': row " + std::to_string(n + 2) +
                            " is short");
        }
        try {
          r(i, n) = std::stod(cell);
        } catch (const std::exception&) {
          throw ConfigError("reference file '" + spec.reference_file + "': bad number '" + cell + "'");
        }
      }
    }
    return r;
  }
  if (spec.levels.empty()) throw ConfigError("control: give levels or a reference_file");
  for (int n = 0; n <= spec.steps; ++n) {
    std::size_t k = 0;
    while (k < spec.switch_at.size() && spec.switch_at[k] <= n) ++k;
    for (Eigen::Index i = 0; i < rows; ++i) r(i, n) = spec.levels[static_cast<std::size_t>(i)][k];
  }
  return r;
}

optim::BoxBounds parameter_box(const ControlSpec& spec, Eigen::Index n_u) {
  const auto expand = [&](const std::vector<double>& v) {
    return v.size() == 1 ? Eigen::VectorXd::Constant(n_u, v.front())
                         : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), n_u));
  };
  optim::BoxBounds b{expand(spec.box_lower), expand(spec.box_upper)};
  try {
    b.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("control box: ") + e.what());
  }
  return b;
}

ctrl::TrackingProblem tracking_problem(const ExperimentConfig& c) {
  const ControlSpec& s = c.control;
  if (s.steps < 1) throw ConfigError("control: steps must be >= 1");
  ctrl::TrackingProblem p;
  p.reference = control_reference(s);
  p.observables = s.observables;
  p.lambda = s.lambda;
  p.horizon = s.horizon;
  p.steps = s.steps;
  p.dt = c.sampling.dt;
  p.box = parameter_box(s, c.system.param_dim());
  const Eigen::Index sd = c.system.state_dim();
  p.x0 = s.initial_state.size() == 1
             ? Eigen::VectorXd::Constant(sd, s.initial_state.front())
             : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(s.initial_state.data(), sd));
  p.plant_tol = s.plant_tol;
  p.options = s.optimizer;
  p.validate();
  return p;
}

std::vector<SweepCell> sweep_cells(const ExperimentConfig& c) {
  std::vector<SweepCell> cells;
  if (c.sweep.empty()) return cells;
  cfg::Document base = c.document;
  base.sections.erase("sweep");
  std::vector<std::size_t> pick(c.sweep.size(), 0);
  const auto emit = [&] {
    SweepCell cell;
    cfg::Document d = base;
    for (std::size_t a = 0; a < c.sweep.size(); ++a) {
      const cfg::Value& v = c.sweep[a].values[pick[a]];
      cell.values.push_back(v);
      if (c.sweep[a].section == "sampling" &&
          (c.sweep[a].key == "parameters" || c.sweep[a].key == "trajectories")) {
        d.sections["sampling"].erase(c.sweep[a].key == "parameters" ? "trajectories" : "parameters");
      }
      d.set(c.sweep[a].section, c.sweep[a].key, v);
    }
    cell.config = ExperimentConfig::from_document(std::move(d));
    cells.push_back(std::move(cell));
  };
  if (c.sweep_zip) {
    for (std::size_t i = 0; i < c.sweep.front().values.size(); ++i) {
      std::fill(pick.begin(), pick.end(), i);
      emit();
    }
    return cells;
  }
  while (true) {
    emit();
    std::size_t a = c.sweep.size();
    while (a > 0) {
      --a;
      if (++pick[a] < c.sweep[a].values.size()) break;
      pick[a] = 0;
      if (a == 0) return cells;
    }
  }
}

}  // namespace pk::app
