#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "linematch/backbone.hpp"
#include "linematch/datagen.hpp"
#include "linematch/descriptor.hpp"
#include "linematch/losses.hpp"
#include "linematch/transport.hpp"

namespace linematch {

struct GraphConfig {
  int layers = 3;
  int width = 128;
  int attention_width = 64;
  bool strict_mutual = true;
  bool learned_adjacency = true;  // false: fixed full adjacency
  void validate() const;
};

struct MatchConfig {
  double delta = 0.5;
  SinkhornConfig sinkhorn;
  double score_floor = 0.2;
  bool exclusion = true;
  double exclusion_threshold = 0.5;  // d_s
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay_factor = 10.0;  // divide per epoch
  double lr_floor = 1e-6;
  int batch_size = 4;
  int epochs = 10;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool augment = true;
  double augment_rotation_deg = 10.0;
  double augment_scale_min = 0.9;
  double augment_scale_max = 1.1;
  void validate() const;
};

/// Every hyperparameter of the pipeline. Serialised as nested JSON sections;
/// missing keys keep their defaults, unknown keys are rejected.
struct Config {
  BackboneConfig backbone;
  GLPoolConfig descriptor;
  LossConfig loss;
  GraphConfig graph;
  MatchConfig match;
  TrainConfig train;
  SyntheticConfig data;
  FilterConfig filter;

  void validate() const;
  int descriptor_dim() const { return backbone.shallow_channels() + backbone.deep_channels(); }
};

nlohmann::json config_to_json(const Config& config);
/// Throws ValidationError naming the first unknown or mistyped key.
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);
/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Config& config);

}  // namespace linematch
