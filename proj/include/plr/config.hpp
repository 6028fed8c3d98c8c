#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "plr/contrastive.hpp"
#include "plr/matching.hpp"
#include "plr/pipeline.hpp"
#include "plr/scoring.hpp"
#include "plr/simulation.hpp"

namespace plr {

/// Every tunable in one document. The top-level seed overrides the mixture
/// and simulation seeds.
struct RunConfig {
  std::uint64_t seed = 7;
  VarifocalConfig varifocal;
  HyperParams losses;
  ContrastiveConfig contrastive;
  CostWeights matching;
  double ema_momentum = 0.999;
  PipelineConfig pipeline;
  SimConfig simulation;
  double static_threshold = 0.5;

  /// Range checks for every section; throws ValidationError.
  void validate() const;
};

/// Defaults overlaid with `doc`. Unknown keys and wrong types are rejected
/// with the offending path in the message.
RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& cfg);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace plr
