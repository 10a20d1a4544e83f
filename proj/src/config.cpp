#include "linematch/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "linematch/errors.hpp"

using nlohmann::json;

namespace linematch {

void GraphConfig::validate() const {
  if (layers < 1) throw ValidationError("graph.layers must be >= 1");
  if (width < 1 || attention_width < 1) throw ValidationError("graph widths must be positive");
}

void MatchConfig::validate() const {
  if (!(delta > 0.0)) throw ValidationError("match.delta must be positive");
  if (sinkhorn.max_iters < 1 || !(sinkhorn.tol > 0.0)) throw ValidationError("match.sinkhorn settings invalid");
  if (!(exclusion_threshold >= -1.0 && exclusion_threshold <= 1.0))
    throw ValidationError("match.exclusion_threshold must lie in [-1, 1]");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(lr_floor >= 0.0) || !(lr_decay_factor >= 1.0))
    throw ValidationError("train: learning rate settings invalid");
  if (batch_size < 1 || epochs < 1) throw ValidationError("train: batch_size and epochs must be >= 1");
  if (!(augment_scale_min > 0.0 && augment_scale_min <= augment_scale_max))
    throw ValidationError("train: augmentation scale range invalid");
}

void Config::validate() const {
  backbone.validate();
  descriptor.validate();
  loss.validate();
  graph.validate();
  match.validate();
  train.validate();
}

namespace {

template <class F>
void visit(BackboneConfig& c, F&& f) {
  f("in_channels", c.in_channels);
  f("channels", c.channels);
  f("strides", c.strides);
  f("shallow_tap", c.shallow_tap);
  f("deep_tap", c.deep_tap);
}

template <class F>
void visit(GLPoolConfig& c, F&& f) {
  f("width", c.width);
  f("groups", c.groups);
  f("sigma", c.sigma);
  f("point_sampling", c.point_sampling);
}

template <class F>
void visit(LossConfig& c, F&& f) {
  f("s3", c.s3);
  f("s5", c.s5);
  f("eta3", c.eta3);
  f("eta5", c.eta5);
  f("lambda", c.lambda);
}

template <class F>
void visit(GraphConfig& c, F&& f) {
  f("layers", c.layers);
  f("width", c.width);
  f("attention_width", c.attention_width);
  f("strict_mutual", c.strict_mutual);
  f("learned_adjacency", c.learned_adjacency);
}

template <class F>
void visit(MatchConfig& c, F&& f) {
  f("delta", c.delta);
  f("sinkhorn_max_iters", c.sinkhorn.max_iters);
  f("sinkhorn_tol", c.sinkhorn.tol);
  f("score_floor", c.score_floor);
  f("exclusion", c.exclusion);
  f("exclusion_threshold", c.exclusion_threshold);
}

template <class F>
void visit(TrainConfig& c, F&& f) {
  f("learning_rate", c.learning_rate);
  f("lr_decay_factor", c.lr_decay_factor);
  f("lr_floor", c.lr_floor);
  f("batch_size", c.batch_size);
  f("epochs", c.epochs);
  f("seed", c.seed);
  f("adam_beta1", c.adam_beta1);
  f("adam_beta2", c.adam_beta2);
  f("adam_eps", c.adam_eps);
  f("augment", c.augment);
  f("augment_rotation_deg", c.augment_rotation_deg);
  f("augment_scale_min", c.augment_scale_min);
  f("augment_scale_max", c.augment_scale_max);
}

template <class F>
void visit(SyntheticConfig& c, F&& f) {
  f("image_size", c.image_size);
  f("grid", c.grid);
  f("world_scale", c.world_scale);
  f("max_rotation_deg", c.max_rotation_deg);
  f("min_scale", c.min_scale);
  f("max_scale", c.max_scale);
  f("max_translation", c.max_translation);
  f("max_perspective", c.max_perspective);
  f("min_line_length", c.min_line_length);
  f("ratio_min", c.ratio_min);
  f("ratio_max", c.ratio_max);
  f("drop_prob_a", c.drop_prob_a);
  f("drop_prob_b", c.drop_prob_b);
  f("fragment_prob", c.fragment_prob);
  f("noise_sigma", c.noise_sigma);
  f("identity", c.identity);
  f("shuffle", c.shuffle);
}

template <class F>
void visit(FilterConfig& c, F&& f) {
  f("min_matches", c.min_matches);
  f("max_overlap", c.max_overlap);
  f("ratio_min", c.ratio_min);
  f("ratio_max", c.ratio_max);
}

template <class F>
void visit_sections(Config& c, F&& f) {
  f("backbone", c.backbone);
  f("descriptor", c.descriptor);
  f("loss", c.loss);
  f("graph", c.graph);
  f("match", c.match);
  f("train", c.train);
  f("data", c.data);
  f("filter", c.filter);
}

template <class V>
void read_value(const json& j, V& v, const std::string& key) {
  bool ok;
  if constexpr (std::is_same_v<V, bool>)
    ok = j.is_boolean();
  else if constexpr (std::is_integral_v<V>)
    ok = j.is_number_integer() && (!std::is_unsigned_v<V> || j.is_number_unsigned());
  else if constexpr (std::is_floating_point_v<V>)
    ok = j.is_number();
  else
    ok = j.is_array() && std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_number_integer(); });
  if (!ok) throw ValidationError("config key '" + key + "' has the wrong type");
  v = j.get<V>();
}

}  // namespace

json config_to_json(const Config& config) {
  Config c = config;
  json out = json::object();
  visit_sections(c, [&](const char* section, auto& s) {
    json sj = json::object();
    visit(s, [&](const char* name, auto& v) { sj[name] = v; });
    out[section] = sj;
  });
  return out;
}

Config config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  Config c;
  std::set<std::string> sections;
  visit_sections(c, [&](const char* section, auto& s) {
    sections.insert(section);
    auto it = j.find(section);
    if (it == j.end()) return;
    if (!it->is_object()) throw ValidationError(std::string("config section '") + section + "' must be an object");
    std::set<std::string> known;
    visit(s, [&](const char* name, auto& v) {
      known.insert(name);
      auto f = it->find(name);
      if (f != it->end()) read_value(*f, v, std::string(section) + "." + name);
    });
    for (const auto& [k, _] : it->items())
      if (!known.count(k)) throw ValidationError("unknown config key '" + std::string(section) + "." + k + "'");
  });
  for (const auto& [k, _] : j.items())
    if (!sections.count(k)) throw ValidationError("unknown config section '" + k + "'");
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("config is not valid JSON: " + path.string(), 0);
  return config_from_json(j);
}

std::string config_hash(const Config& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace linematch
