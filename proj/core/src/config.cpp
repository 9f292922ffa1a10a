#include "ctxforest/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctxforest/error.hpp"
#include "ctxforest/rng.hpp"

namespace ctxforest {

namespace {

using nlohmann::ordered_json;

std::uint64_t parse_u64(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("config key '" + std::string(key) + "' expects a non-negative integer, got '" +
                          std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view key, std::string_view text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(text), &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("config key '" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError("config key '" + std::string(key) + "' expects true/false, got '" + std::string(text) + "'");
}

FeatureKind parse_kind(std::string_view name) {
  for (std::size_t k = 0; k < kNumFeatureKinds; ++k) {
    if (feature_kind_name(static_cast<FeatureKind>(k)) == name) return static_cast<FeatureKind>(k);
  }
  throw ValidationError("unknown feature kind '" + std::string(name) + "'");
}

// Comma-separated kind names; empty string means "all legal kinds".
std::vector<FeatureKind> parse_kinds(std::string_view text) {
  std::vector<FeatureKind> kinds;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    if (!item.empty()) kinds.push_back(parse_kind(item));
  }
  return kinds;
}

std::string join_kinds(const std::vector<FeatureKind>& kinds) {
  std::string out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) out += ',';
    out += feature_kind_name(kinds[i]);
  }
  return out;
}

ordered_json to_json(const RunConfig& c, bool with_threads) {
  const ForestConfig& f = c.cascade.forest;
  ordered_json j;
  j["seed"] = c.seed;
  j["num_passes"] = c.cascade.num_passes;
  j["samples_per_class_per_volume"] = c.cascade.samples_per_class_per_volume;
  j["cross_context"] = c.cascade.cross_context;
  j["num_trees"] = f.num_trees;
  j["max_depth"] = f.max_depth;
  j["thresholds_per_feature"] = f.thresholds_per_feature;
  j["min_samples_leaf"] = f.min_samples_leaf;
  j["bagging_fraction"] = f.bagging_fraction;
  j["bootstrap"] = f.bootstrap;
  j["leaf_smoothing"] = f.leaf_smoothing;
  j["pool_size"] = f.features.pool_size;
  j["r_max_mm"] = f.features.r_max_mm;
  j["band_tau_in_mm"] = f.features.band_tau_in_mm;
  j["band_tau_out_mm"] = f.features.band_tau_out_mm;
  j["use_landmark_features"] = f.features.use_landmark_features;
  j["feature_kinds"] = join_kinds(f.features.kinds);
  j["lambda"] = c.energy.lambda;
  j["sigma"] = c.energy.sigma;
  j["p_floor"] = c.energy.p_floor;
  j["paper_literal_smoothness"] = c.energy.paper_literal_smoothness;
  j["refine"] = c.refine;
  if (with_threads) j["threads"] = c.threads;
  return j;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    const ordered_json defaults = to_json(RunConfig{}, true);
    for (const auto& item : defaults.items()) k.push_back(item.key());
    return k;
  }();
  return keys;
}

void apply_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  ForestConfig& f = c.cascade.forest;
  if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "num_passes") c.cascade.num_passes = static_cast<int>(parse_u64(key, value));
  else if (key == "samples_per_class_per_volume") c.cascade.samples_per_class_per_volume = parse_u64(key, value);
  else if (key == "cross_context") c.cascade.cross_context = parse_bool(key, value);
  else if (key == "num_trees") f.num_trees = parse_u64(key, value);
  else if (key == "max_depth") f.max_depth = static_cast<int>(parse_u64(key, value));
  else if (key == "thresholds_per_feature") f.thresholds_per_feature = parse_u64(key, value);
  else if (key == "min_samples_leaf") f.min_samples_leaf = parse_u64(key, value);
  else if (key == "bagging_fraction") f.bagging_fraction = parse_double(key, value);
  else if (key == "bootstrap") f.bootstrap = parse_bool(key, value);
  else if (key == "leaf_smoothing") f.leaf_smoothing = parse_double(key, value);
  else if (key == "pool_size") f.features.pool_size = parse_u64(key, value);
  else if (key == "r_max_mm") f.features.r_max_mm = parse_double(key, value);
  else if (key == "band_tau_in_mm") f.features.band_tau_in_mm = parse_double(key, value);
  else if (key == "band_tau_out_mm") f.features.band_tau_out_mm = parse_double(key, value);
  else if (key == "use_landmark_features") f.features.use_landmark_features = parse_bool(key, value);
  else if (key == "feature_kinds") f.features.kinds = parse_kinds(value);
  else if (key == "lambda") c.energy.lambda = parse_double(key, value);
  else if (key == "sigma") c.energy.sigma = parse_double(key, value);
  else if (key == "p_floor") c.energy.p_floor = parse_double(key, value);
  else if (key == "paper_literal_smoothness") c.energy.paper_literal_smoothness = parse_bool(key, value);
  else if (key == "refine") c.refine = parse_bool(key, value);
  else if (key == "threads") c.threads = parse_u64(key, value);
  else throw UsageError("unknown config key '" + std::string(key) + "'");
}

RunConfig config_from_json(std::string_view json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else if (value.is_boolean() || value.is_number()) text = value.dump();
    else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].is_string()) throw ValidationError("config key '" + key + "' expects a list of names");
        if (i) text += ',';
        text += value[i].get<std::string>();
      }
    } else {
      throw ValidationError("config key '" + key + "' has an unsupported value type");
    }
    apply_config_value(cfg, key, text);
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg, true).dump(2) + "\n"; }

void validate_config(const RunConfig& c) {
  const ForestConfig& f = c.cascade.forest;
  if (c.cascade.num_passes < 1) throw ValidationError("num_passes must be >= 1");
  if (c.cascade.samples_per_class_per_volume < 1) throw ValidationError("samples_per_class_per_volume must be >= 1");
  if (f.num_trees < 1) throw ValidationError("num_trees must be >= 1");
  if (f.max_depth < 1) throw ValidationError("max_depth must be >= 1");
  if (f.thresholds_per_feature < 1) throw ValidationError("thresholds_per_feature must be >= 1");
  if (f.min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be >= 1");
  if (!(f.bagging_fraction > 0.0 && f.bagging_fraction <= 1.0)) {
    throw ValidationError("bagging_fraction must lie in (0, 1]");
  }
  if (f.leaf_smoothing < 0.0) throw ValidationError("leaf_smoothing must be >= 0");
  if (f.features.pool_size < 1) throw ValidationError("pool_size must be >= 1");
  if (!(f.features.r_max_mm >= 0.0)) throw ValidationError("r_max_mm must be >= 0");
  if (f.features.band_tau_in_mm < 0.0 || f.features.band_tau_out_mm < 0.0) {
    throw ValidationError("band thresholds must be >= 0");
  }
  validate_energy_params(c.energy);
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(to_json(cfg, false).dump()); }

}  // namespace ctxforest
