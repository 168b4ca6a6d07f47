#pragma once
// Model checkpoints: one JSON manifest line followed by the raw little-endian
// float64 payloads it lists, in order. Loading reproduces every parameter
// bit-for-bit.

#include "pk/dynamics.hpp"
#include "pk/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace pk::ckpt {

/// Manifest format version written by this build. Files with another major
/// version are rejected.
inline constexpr int kFormatMajor = 1;
inline constexpr int kFormatMinor = 0;

struct Checkpoint {
  eval::Predictor predictor;
  dyn::System system;
  double dt = 0.0;
  /// Model kind name as written in the config (m0 .. m4, pknn).
  std::string kind;
  /// Hash of the configuration text that produced the model.
  std::string provenance;
  /// Free-form extra manifest fields (training summary and the like).
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json describe(const dict::Dictionary& d);
nlohmann::json describe(const koop::OperatorModel& m);

void save(const Checkpoint& c, const std::string& path);
/// Throws ConfigError on unknown formats, version majors or truncated payloads.
Checkpoint load(const std::string& path);

/// 64-bit FNV-1a of `text` as 16 hex digits.
std::string fingerprint(const std::string& text);

}  // namespace pk::ckpt
