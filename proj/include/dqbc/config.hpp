#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqbc/losses.hpp"
#include "dqbc/schema.hpp"

namespace dqbc {

enum class Precision { kF32, kF64 };

// Serializable run settings. Every field has a default; unknown JSON keys
// are rejected so typos never pass silently.
struct RunConfig {
  PyramidConfig pyramid;
  ModelDims dims;
  LossConfig loss;
  double t = 0.5;
  uint64_t seed = 42;
  Precision precision = Precision::kF32;

  void validate() const {
    pyramid.validate();
    dims.validate();
    loss.validate();
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ConfigError("RunConfig: t must lie in [0, 1]");
    }
  }
};

namespace detail {
inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.find(it.key()) == known.end()) {
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

template <typename V>
void maybe_get(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

template <size_t N>
void maybe_get_array(const nlohmann::json& j, const char* key,
                     std::array<int, N>& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<int>>();
  if (v.size() != N) {
    throw ConfigError("config: \"" + std::string(key) + "\" needs " +
                      std::to_string(N) + " entries");
  }
  for (size_t i = 0; i < N; ++i) out[i] = v[i];
}
}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: document must be an object");
  detail::reject_unknown_keys(
      j, {"pyramid", "widths", "loss", "t", "seed", "precision"}, "root");
  RunConfig cfg;
  if (j.contains("pyramid")) {
    const auto& p = j.at("pyramid");
    detail::reject_unknown_keys(p, {"levels", "radii", "normalize_by_sqrt_c"},
                                "pyramid");
    detail::maybe_get(p, "levels", cfg.pyramid.levels);
    detail::maybe_get(p, "radii", cfg.pyramid.radii);
    detail::maybe_get(p, "normalize_by_sqrt_c",
                      cfg.pyramid.normalize_by_sqrt_c);
  }
  if (j.contains("widths")) {
    const auto& w = j.at("widths");
    detail::reject_unknown_keys(
        w,
        {"extractor", "mgm_context", "mgm_hidden", "mgm_reduced",
         "mgm_generator", "context", "upblock_hidden", "synth_down",
         "synth_up"},
        "widths");
    detail::maybe_get_array(w, "extractor", cfg.dims.extractor);
    detail::maybe_get(w, "mgm_context", cfg.dims.mgm_context);
    detail::maybe_get(w, "mgm_hidden", cfg.dims.mgm_hidden);
    detail::maybe_get(w, "mgm_reduced", cfg.dims.mgm_reduced);
    detail::maybe_get(w, "mgm_generator", cfg.dims.mgm_generator);
    detail::maybe_get_array(w, "context", cfg.dims.context);
    detail::maybe_get(w, "upblock_hidden", cfg.dims.upblock_hidden);
    detail::maybe_get_array(w, "synth_down", cfg.dims.synth_down);
    detail::maybe_get_array(w, "synth_up", cfg.dims.synth_up);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    detail::reject_unknown_keys(
        l, {"lambda_teacher", "lambda_distill", "distill_level_weights"},
        "loss");
    detail::maybe_get(l, "lambda_teacher", cfg.loss.lambda_teacher);
    detail::maybe_get(l, "lambda_distill", cfg.loss.lambda_distill);
    detail::maybe_get(l, "distill_level_weights",
                      cfg.loss.distill_level_weights);
  }
  detail::maybe_get(j, "t", cfg.t);
  detail::maybe_get(j, "seed", cfg.seed);
  if (j.contains("precision")) {
    const std::string p = j.at("precision").get<std::string>();
    if (p == "f32") {
      cfg.precision = Precision::kF32;
    } else if (p == "f64") {
      cfg.precision = Precision::kF64;
    } else {
      throw ConfigError("config: precision must be \"f32\" or \"f64\"");
    }
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["pyramid"] = {{"levels", cfg.pyramid.levels},
                  {"radii", cfg.pyramid.radii},
                  {"normalize_by_sqrt_c", cfg.pyramid.normalize_by_sqrt_c}};
  j["widths"] = {
      {"extractor", cfg.dims.extractor},
      {"mgm_context", cfg.dims.mgm_context},
      {"mgm_hidden", cfg.dims.mgm_hidden},
      {"mgm_reduced", cfg.dims.mgm_reduced},
      {"mgm_generator", cfg.dims.mgm_generator},
      {"context", cfg.dims.context},
      {"upblock_hidden", cfg.dims.upblock_hidden},
      {"synth_down", cfg.dims.synth_down},
      {"synth_up", cfg.dims.synth_up}};
  j["loss"] = {{"lambda_teacher", cfg.loss.lambda_teacher},
               {"lambda_distill", cfg.loss.lambda_distill},
               {"distill_level_weights", cfg.loss.distill_level_weights}};
  j["t"] = cfg.t;
  j["seed"] = cfg.seed;
  j["precision"] = cfg.precision == Precision::kF32 ? "f32" : "f64";
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_run_config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return parse_run_config(j);
}

}  // namespace dqbc
