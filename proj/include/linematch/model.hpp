#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "linematch/backbone.hpp"
#include "linematch/config.hpp"
#include "linematch/graphnet.hpp"

namespace linematch {

/// All learnable state: backbone, shared dustbin descriptor u, one parameter
/// block per graph layer and the affinity weight C.
struct Model {
  Config config;
  BackboneParams backbone;
  Parameter dustbin;
  std::vector<GraphLayerParams> layers;
  Parameter affinity_weight;

  static Model init(const Config& config, std::uint64_t seed);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
};

/// Adam moments keyed by parameter name.
struct AdamState {
  std::map<std::string, std::pair<Matrix, Matrix>> moments;
  std::int64_t step = 0;
};

struct Checkpoint {
  Model model;
  AdamState optimizer;
  int epoch = 0;
  std::string config_hash;
};

/// Binary little-endian format: magic, version, config JSON, epoch, named
/// parameter tensors, Adam moments. Doubles are stored bit-exactly.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws IoError when the file is missing or unreadable and ParseError when it is malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace linematch
