#include "pk/checkpoint.hpp"

#include "pk/dataset.hpp"
#include "pk/error.hpp"

#include <cstdio>
#include <fstream>

namespace pk::ckpt {

namespace {

std::string tail_name(dict::Tail t) {
  switch (t) {
    case dict::Tail::Network: return "network";
    case dict::Tail::Rbf: return "rbf";
    default: return "none";
  }
}

struct Payload {
  std::string name;
  Eigen::VectorXd data;
};

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return m.reshaped(); }

std::vector<Payload> payloads(const eval::LiftedModel& m, const Eigen::VectorXd* key) {
  std::vector<Payload> out;
  const auto& d = m.dict;
  if (d.tail() == dict::Tail::Network) out.push_back({"dictionary.params", d.params()});
  if (d.tail() == dict::Tail::Rbf) {
    out.push_back({"dictionary.centers", flat(d.centers())});
    out.push_back({"dictionary.gamma", Eigen::VectorXd::Constant(1, d.gamma())});
  }
  if (d.scaler().active()) {
    out.push_back({"dictionary.scaler.shift", d.scaler().shift});
    out.push_back({"dictionary.scaler.scale", d.scaler().scale});
  }
  out.push_back({"operator.params", m.op.params()});
  if (key != nullptr) out.push_back({"key", *key});
  return out;
}

}  // namespace

nlohmann::json describe(const dict::Dictionary& d) {
  nlohmann::json j;
  j["observable"] = dict::to_string(d.observable());
  j["tail"] = tail_name(d.tail());
  j["state_dim"] = d.state_dim();
  j["n_psi"] = d.n_psi();
  if (d.tail() == dict::Tail::Network) j["hidden"] = d.net_spec().hidden_widths;
  if (d.tail() == dict::Tail::Rbf) j["centers"] = d.centers().cols();
  j["scaled"] = d.scaler().active();
  return j;
}

nlohmann::json describe(const koop::OperatorModel& m) {
  nlohmann::json j;
  j["variant"] = koop::to_string(m.variant());
  j["dim"] = m.dim();
  j["n_u"] = m.n_u();
  if (m.variant() == koop::Variant::Poly) j["degree"] = m.max_degree();
  if (m.variant() == koop::Variant::Network) {
    j["hidden"] = m.net_spec().hidden_widths;
    j["fixed_first_row"] = m.fixed_first_row();
  }
  return j;
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save(const Checkpoint& c, const std::string& path) {
  c.predictor.validate();
  nlohmann::json manifest;
  manifest["format"] = "pk-checkpoint";
  manifest["version"] = std::to_string(kFormatMajor) + "." + std::to_string(kFormatMinor);
  manifest["name"] = c.predictor.name;
  manifest["kind"] = c.kind;
  manifest["system"] = pk::describe(c.system);
  manifest["dt"] = c.dt;
  manifest["provenance"] = c.provenance;
  manifest["extra"] = c.extra;
  std::vector<Payload> all;
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < c.predictor.members.size(); ++i) {
    const auto& m = c.predictor.members[i];
    const Eigen::VectorXd* key = c.predictor.keys.empty() ? nullptr : &c.predictor.keys[i];
    nlohmann::json entry;
    entry["dictionary"] = describe(m.dict);
    entry["operator"] = describe(m.op);
    nlohmann::json list = nlohmann::json::array();
    for (auto& p : payloads(m, key)) {
      list.push_back({p.name, p.data.size()});
      all.push_back(std::move(p));
    }
    entry["payloads"] = list;
    members.push_back(entry);
  }
  manifest["keyed"] = !c.predictor.keys.empty();
  manifest["members"] = members;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << manifest.dump() << '\n';
  for (const auto& p : all) io::write_doubles(out, p.data.data(), static_cast<std::size_t>(p.data.size()));
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

namespace {

Eigen::VectorXd take(std::istream& in, const nlohmann::json& list, std::size_t& next, const std::string& name,
                     const std::string& path) {
  if (next >= list.size() || list[next].at(0).get<std::string>() != name) {
    throw ConfigError("checkpoint '" + path + "': expected payload " + name);
  }
  Eigen::VectorXd v(list[next].at(1).get<Eigen::Index>());
  ++next;
  io::read_doubles(in, v.data(), static_cast<std::size_t>(v.size()));
  if (!in) throw ConfigError("checkpoint '" + path + "': truncated payload " + name);
  return v;
}

eval::LiftedModel read_member(std::istream& in, const nlohmann::json& entry, Eigen::VectorXd* key,
                              const std::string& path) {
  const auto& jd = entry.at("dictionary");
  const auto& jo = entry.at("operator");
  const auto& list = entry.at("payloads");
  std::size_t next = 0;

  const dict::Observable g = dict::observable_from_string(jd.at("observable").get<std::string>());
  const auto state_dim = jd.at("state_dim").get<Eigen::Index>();
  const std::string tail = jd.at("tail").get<std::string>();
  dict::Dictionary d;
  if (tail == "network") {
    d = dict::Dictionary::network(g, state_dim, jd.at("n_psi").get<Eigen::Index>(),
                                  jd.at("hidden").get<std::vector<Eigen::Index>>(), 0);
    const Eigen::VectorXd p = take(in, list, next, "dictionary.params", path);
    require_dims(p.size() == d.params().size(), "checkpoint: dictionary parameter count mismatch");
    d.params() = p;
  } else if (tail == "rbf") {
    const Eigen::VectorXd c = take(in, list, next, "dictionary.centers", path);
    const Eigen::VectorXd gamma = take(in, list, next, "dictionary.gamma", path);
    require_dims(c.size() == state_dim * jd.at("centers").get<Eigen::Index>() && gamma.size() == 1,
                 "checkpoint: rbf payload size mismatch");
    d = dict::Dictionary::rbf_from(g, c.reshaped(state_dim, c.size() / state_dim), gamma(0));
  } else if (tail == "none") {
    d = dict::Dictionary::prefix_only(g, state_dim);
  } else {
    throw ConfigError("checkpoint '" + path + "': unknown dictionary tail '" + tail + "'");
  }
  if (jd.value("scaled", false)) {
    dict::Scaler s;
    s.shift = take(in, list, next, "dictionary.scaler.shift", path);
    s.scale = take(in, list, next, "dictionary.scaler.scale", path);
    d.set_scaler(std::move(s));
  }

  const koop::Variant v = koop::variant_from_string(jo.at("variant").get<std::string>());
  const auto dim = jo.at("dim").get<Eigen::Index>();
  const auto n_u = jo.at("n_u").get<Eigen::Index>();
  koop::OperatorModel op;
  switch (v) {
    case koop::Variant::Constant: op = koop::OperatorModel::constant(dim, n_u); break;
    case koop::Variant::Affine: op = koop::OperatorModel::affine(dim, n_u); break;
    case koop::Variant::Bilinear: op = koop::OperatorModel::bilinear(dim, n_u); break;
    case koop::Variant::Poly: op = koop::OperatorModel::poly(dim, n_u, jo.at("degree").get<int>()); break;
    case koop::Variant::Network:
      op = koop::OperatorModel::network(dim, n_u, jo.at("hidden").get<std::vector<Eigen::Index>>(), 0,
                                        jo.at("fixed_first_row").get<bool>());
      break;
  }
  const Eigen::VectorXd p = take(in, list, next, "operator.params", path);
  require_dims(p.size() == op.params().size(), "checkpoint: operator parameter count mismatch");
  op.params() = p;
  if (key != nullptr) *key = take(in, list, next, "key", path);
  if (next != list.size()) throw ConfigError("checkpoint '" + path + "': unexpected extra payloads");
  return {std::move(d), std::move(op)};
}

}  // namespace

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::string line;
  std::getline(in, line);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint '" + path + "': bad manifest: " + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", std::string()) != "pk-checkpoint") {
    throw ConfigError("'" + path + "' is not a checkpoint file");
  }
  const std::string version = manifest.value("version", std::string());
  int major = -1;
  try {
    major = std::stoi(version.substr(0, version.find('.')));
  } catch (const std::exception&) {
    throw ConfigError("checkpoint '" + path + "': unreadable format version '" + version + "'");
  }
  if (major != kFormatMajor) {
    throw ConfigError("checkpoint '" + path + "': format version " + version + " is not supported (this build reads " +
                      std::to_string(kFormatMajor) + ".x)");
  }
  try {
    Checkpoint c;
    c.predictor.name = manifest.at("name").get<std::string>();
    c.kind = manifest.at("kind").get<std::string>();
    c.system = system_from_json(manifest.at("system"));
    c.dt = manifest.at("dt").get<double>();
    c.provenance = manifest.value("provenance", std::string());
    c.extra = manifest.value("extra", nlohmann::json::object());
    const auto& members = manifest.at("members");
    const bool keyed = manifest.value("keyed", false);
    for (const auto& entry : members) {
      Eigen::VectorXd key;
      c.predictor.members.push_back(read_member(in, entry, keyed ? &key : nullptr, path));
      if (keyed) c.predictor.keys.push_back(std::move(key));
    }
    in.peek();
    if (!in.eof()) throw ConfigError("checkpoint '" + path + "': trailing bytes after payloads");
    c.predictor.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace pk::ckpt
