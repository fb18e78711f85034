#pragma once

// JSON configuration ingestion:
//   {"N": 10, "gamma_c": 1, "w": 5,
//    "cqed": {"g":..,"kappa":..,"Gamma":..,"gamma_aux":..},
//    "geometry": {"A":..,"F":..,"lambda0":..,"Q":..,"V_eff":..}}
// Unknown keys are rejected at every level.

#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "superrad/errors.hpp"
#include "superrad/model.hpp"

namespace superrad {

using nlohmann::json;

struct ModelConfig {
  ModelParams params;
  std::optional<CQEDParams> cqed;
  std::optional<CavityGeometry> geometry;
};

namespace detail {

inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

inline double number_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError("missing key '" + std::string(key) + "' in " + where);
  const auto& v = obj.at(key);
  if (!v.is_number())
    throw ValidationError("key '" + std::string(key) + "' in " + where + " must be a number");
  return v.get<double>();
}

}  // namespace detail

inline ModelConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ValidationError("configuration must be a JSON object");
  detail::reject_unknown_keys(doc, {"N", "gamma_c", "w", "cqed", "geometry"}, "configuration");

  ModelConfig cfg;
  const double n = detail::number_field(doc, "N", "configuration");
  if (!doc.at("N").is_number_integer() && n != std::floor(n))
    throw ValidationError("key 'N' must be an integer");
  cfg.params.N = static_cast<int>(n);
  cfg.params.gamma_c = detail::number_field(doc, "gamma_c", "configuration");
  cfg.params.w = detail::number_field(doc, "w", "configuration");
  validate(cfg.params);

  if (doc.contains("cqed")) {
    const auto& c = doc.at("cqed");
    if (!c.is_object()) throw ValidationError("key 'cqed' must be an object");
    detail::reject_unknown_keys(c, {"g", "kappa", "Gamma", "gamma_aux"}, "cqed");
    cfg.cqed = derive_cqed(detail::number_field(c, "g", "cqed"), detail::number_field(c, "kappa", "cqed"),
                           detail::number_field(c, "Gamma", "cqed"),
                           detail::number_field(c, "gamma_aux", "cqed"));
  }
  if (doc.contains("geometry")) {
    const auto& g = doc.at("geometry");
    if (!g.is_object()) throw ValidationError("key 'geometry' must be an object");
    detail::reject_unknown_keys(g, {"A", "F", "lambda0", "Q", "V_eff"}, "geometry");
    CavityGeometry geom{detail::number_field(g, "A", "geometry"), detail::number_field(g, "F", "geometry"),
                        detail::number_field(g, "lambda0", "geometry"), detail::number_field(g, "Q", "geometry"),
                        detail::number_field(g, "V_eff", "geometry")};
    geometric_critical_numbers(geom);  // validates positivity
    cfg.geometry = geom;
  }
  return cfg;
}

inline ModelConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("configuration parse error: ") + e.what());
  }
  return parse_config(doc);
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open configuration file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline json to_json(const ModelParams& p) {
  return json{{"N", p.N}, {"gamma_c", p.gamma_c}, {"w", p.w}};
}

/// Resolved configuration including the regime label and derived quantities.
inline json resolved_json(const ModelConfig& cfg) {
  json out = to_json(cfg.params);
  out["regime"] = std::string(to_string(classify_regime(cfg.params)));
  if (cfg.cqed) {
    const auto& c = *cfg.cqed;
    out["cqed"] = json{{"g", c.g},
                       {"kappa", c.kappa},
                       {"Gamma", c.Gamma},
                       {"gamma_aux", c.gamma_aux},
                       {"cooperativity", c.cooperativity},
                       {"gamma_c_derived", c.gamma_c},
                       {"n0", c.n0},
                       {"m0", c.m0}};
  }
  if (cfg.geometry) {
    const auto& g = *cfg.geometry;
    const auto crit = geometric_critical_numbers(g);
    out["geometry"] = json{{"A", g.A},
                           {"F", g.F},
                           {"lambda0", g.lambda0},
                           {"Q", g.Q},
                           {"V_eff", g.V_eff},
                           {"sigma_res", resonant_cross_section(g.lambda0)},
                           {"n0", crit.n0},
                           {"m0", crit.m0}};
    out["warnings"] = geometry_warnings(g);
  }
  return out;
}

}  // namespace superrad
