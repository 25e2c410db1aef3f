#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "matchfree/bench.hpp"
#include "matchfree/cost.hpp"
#include "matchfree/errors.hpp"
#include "matchfree/gt_probe.hpp"
#include "matchfree/losses.hpp"
#include "matchfree/scg.hpp"
#include "matchfree/toy.hpp"

namespace matchfree {

inline constexpr int kConfigVersion = 1;

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Top-level document. Every key is optional (defaults below); unknown keys
// anywhere are rejected.
struct Config {
  int version = kConfigVersion;
  CostWeights cost;
  ClassCostMode cls_mode = ClassCostMode::kNll;
  ScgConfig scg;
  // alpha, beta, routing flags and per_gt_mean; its cost/scg members are
  // filled from the sections above by loss_config().
  LossConfig loss;
  GtProbeConfig probe;
  ToyConfig toy;
  BenchSpec bench;

  LossConfig loss_config() const;
  void validate() const;

  friend bool operator==(const Config&, const Config&) = default;
};

Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& c);
Config load_config(const std::filesystem::path& path);

const char* norm_mode_name(NormMode m);
NormMode parse_norm_mode(const std::string& s);

// {"gts": [{"label": int, "box": [cx, cy, w, h]}, ...]}. Syntax errors report
// the line number.
GroundTruthSet parse_scene(const std::string& text);
GroundTruthSet load_scene(const std::filesystem::path& path);
nlohmann::json scene_to_json(const GroundTruthSet& gts);

}  // namespace matchfree
