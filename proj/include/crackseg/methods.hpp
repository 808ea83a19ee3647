///   @file methods.hpp
///   @brief Method configurations, named presets and a caching segmenter.
///
/// A MethodConfig names a method and its parameters. Presets are read from
/// data/presets/presets.json and are addressed as method/width/objective,
/// e.g. "hp/w3/precision" ("percolation" is accepted for "hp"). Percolation
/// configs carry the preset name of their Frangi preselection; forest
/// configs carry the path of a trained model.

#ifndef CRACKSEG_METHODS_HPP
#define CRACKSEG_METHODS_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptive_morph.hpp"
#include "errors.hpp"
#include "filters.hpp"
#include "forest.hpp"
#include "minimal_paths.hpp"
#include "percolation.hpp"
#include "template_match.hpp"
#include "tuning.hpp"
#include "volume.hpp"

#ifndef CRACKSEG_DATA_DIR
#define CRACKSEG_DATA_DIR "data"
#endif

namespace crackseg {

struct MethodInfo {
  const char* name;
  std::vector<const char*> params;  ///< all required
  const char* threshold;            ///< parameter applied after the cached response, or ""
};

inline const std::vector<MethodInfo>& method_table() {
  static const std::vector<MethodInfo> t = {
      {"sheet", {"sigma", "rho", "delta", "t1"}, "t1"},
      {"frangi", {"sigma", "alpha", "beta", "t2"}, "t2"},
      {"template", {"b", "c", "n", "N", "t4"}, "t4"},
      {"adaptive", {"sigma", "delta_max", "n", "N", "k"}, "k"},
      {"minpath", {"ell", "t3"}, "t3"},
      {"hp", {"epsilon", "tau", "f", "W"}, "tau"},
      {"rf", {"d_dt", "n_dt"}, ""},
      {"nn", {"t6"}, "t6"},
  };
  return t;
}

inline std::string canonical_method(const std::string& m) {
  if (m == "percolation") return "hp";
  for (const auto& i : method_table())
    if (m == i.name) return m;
  throw ConfigError("unknown method '" + m + "'");
}

inline const MethodInfo& method_info(const std::string& m) {
  const std::string c = canonical_method(m);
  for (const auto& i : method_table())
    if (c == i.name) return i;
  throw ConfigError("unknown method '" + m + "'");
}

struct MethodConfig {
  std::string method;
  ParamMap params;
  std::string preselect;             ///< hp: preset name of the Frangi preselection
  std::filesystem::path model;       ///< rf: trained forest file
  std::string preset;                ///< name this config came from, if any
};

// ---------------------------------------------------------------------------
// Typed parameters

namespace detail {

inline double need(const ParamMap& p, const char* k) {
  auto it = p.find(k);
  if (it == p.end()) throw ConfigError(std::string("missing parameter '") + k + "'");
  return it->second;
}

inline int need_int(const ParamMap& p, const char* k) {
  const double v = need(p, k);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(std::string("parameter '") + k + "' must be an integer");
  return int(v);
}

}  // namespace detail

inline SheetParams sheet_params(const ParamMap& p) {
  SheetParams s{detail::need(p, "sigma"), detail::need(p, "rho"), detail::need(p, "delta"), detail::need(p, "t1")};
  s.validate();
  return s;
}
inline FrangiParams frangi_params(const ParamMap& p) {
  const double s = detail::need(p, "sigma");
  FrangiParams f{p.count("sigma_min") ? p.at("sigma_min") : s, p.count("sigma_max") ? p.at("sigma_max") : s,
                 detail::need(p, "alpha"), detail::need(p, "beta"), detail::need(p, "t2")};
  f.validate();
  return f;
}
inline TemplateParams template_params(const ParamMap& p) {
  TemplateParams t{detail::need_int(p, "N"), detail::need_int(p, "b"), detail::need_int(p, "c"),
                   detail::need_int(p, "n"), detail::need(p, "t4")};
  t.validate();
  return t;
}
inline AdaptiveMorphParams adaptive_params(const ParamMap& p) {
  AdaptiveMorphParams a{detail::need(p, "sigma"), detail::need_int(p, "N"), detail::need_int(p, "n"),
                        detail::need(p, "delta_max"), detail::need(p, "k")};
  a.validate();
  return a;
}
inline MinimalPathParams minpath_params(const ParamMap& p) {
  MinimalPathParams m{detail::need_int(p, "ell"), detail::need(p, "t3")};
  m.validate();
  return m;
}
inline PercolationParams percolation_params(const ParamMap& p) {
  PercolationParams h{detail::need(p, "epsilon"), detail::need_int(p, "W"), detail::need(p, "f"), detail::need(p, "tau")};
  h.validate();
  return h;
}
inline ForestParams forest_params(const ParamMap& p, std::uint64_t seed) {
  ForestParams f;
  f.n_trees = detail::need_int(p, "n_dt");
  f.max_depth = detail::need_int(p, "d_dt");
  f.seed = seed;
  f.validate();
  return f;
}

// ---------------------------------------------------------------------------
// Presets

class PresetTable {
 public:
  static std::filesystem::path default_path() {
    return std::filesystem::path(CRACKSEG_DATA_DIR) / "presets" / "presets.json";
  }

  static const PresetTable& builtin() {
    static const PresetTable t(default_path());
    return t;
  }

  explicit PresetTable(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read preset table " + path.string());
    try {
      const auto j = nlohmann::json::parse(is);
      if (j.at("format") != "crackseg-presets") throw ConfigError(path.string() + ": not a preset table");
      for (const auto& [name, e] : j.at("presets").items()) {
        MethodConfig c;
        c.method = canonical_method(e.at("method").get<std::string>());
        c.params = e.at("params").get<ParamMap>();
        c.preselect = e.value("preselect", std::string());
        c.preset = name;
        presets_.emplace(name, c);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }

  /// Resolves a preset name; "percolation/..." is an alias of "hp/...".
  const MethodConfig& get(std::string name) const {
    if (name.rfind("percolation/", 0) == 0) name = "hp/" + name.substr(12);
    auto it = presets_.find(name);
    if (it == presets_.end()) throw ConfigError("unknown preset '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const {
    try {
      get(name);
      return true;
    } catch (const ConfigError&) {
      return false;
    }
  }
  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (const auto& [k, v] : presets_) n.push_back(k);
    return n;
  }

 private:
  std::map<std::string, MethodConfig> presets_;
};

/// Checks the config completely (parameters, preselection, model presence)
/// without touching any volume.
inline void validate_config(const MethodConfig& c, const PresetTable& presets = PresetTable::builtin()) {
  const std::string m = canonical_method(c.method);
  for (const auto& [k, v] : c.params) {
    const auto& names = method_info(m).params;
    const bool known = std::any_of(names.begin(), names.end(), [&](const char* n) { return k == n; }) ||
                       (m == "frangi" && (k == "sigma_min" || k == "sigma_max"));
    if (!known) throw ConfigError("parameter '" + k + "' is not used by method " + m);
    if (!std::isfinite(v)) throw ConfigError("parameter '" + k + "' must be finite");
  }
  try {
    if (m == "sheet") sheet_params(c.params);
    if (m == "frangi") frangi_params(c.params);
    if (m == "template") template_params(c.params);
    if (m == "adaptive") adaptive_params(c.params);
    if (m == "minpath") minpath_params(c.params);
    if (m == "rf") forest_params(c.params, 0);
    if (m == "hp") {
      percolation_params(c.params);
      if (c.preselect.empty()) throw ConfigError("percolation needs a preselection preset");
      const MethodConfig& pre = presets.get(c.preselect);
      if (pre.method != "frangi") throw ConfigError("percolation preselection must be a Frangi preset");
      validate_config(pre, presets);
    }
    if (m == "nn") detail::need(c.params, "t6");
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

/// {"preset": name, "params": {overrides}} or {"method": m, "params": {...},
/// "preselect": name, "model": path}.
template <class Json>
MethodConfig method_config_from_json(const Json& j, const PresetTable& presets = PresetTable::builtin()) {
  MethodConfig c;
  try {
    if (j.contains("preset")) {
      c = presets.get(j.at("preset").template get<std::string>());
    } else {
      c.method = canonical_method(j.at("method").template get<std::string>());
    }
    if (j.contains("params"))
      for (const auto& [k, v] : j.at("params").items()) c.params[k] = v.template get<double>();
    if (j.contains("preselect")) c.preselect = j.at("preselect").template get<std::string>();
    if (j.contains("model")) c.model = j.at("model").template get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("method config: ") + e.what());
  }
  validate_config(c, presets);
  return c;
}

inline nlohmann::ordered_json to_json(const MethodConfig& c) {
  nlohmann::ordered_json j;
  if (!c.preset.empty()) j["preset"] = c.preset;
  j["method"] = c.method;
  j["params"] = c.params;
  if (!c.preselect.empty()) j["preselect"] = c.preselect;
  if (!c.model.empty()) j["model"] = c.model.string();
  return j;
}

// ---------------------------------------------------------------------------
// Segmentation

/// Segments one volume. Threshold-independent responses are cached per
/// parameter set, so sweeping a threshold (as the tuner does) computes the
/// expensive part once.
class Segmenter {
 public:
  explicit Segmenter(const Volume& vol, const PresetTable& presets = PresetTable::builtin())
      : vol_(vol), presets_(presets) {}

  /// Forest used by "rf" configs; when unset the config's model is loaded.
  void set_forest(std::shared_ptr<const Forest> f) { forest_ = std::move(f); }

  BinaryMask operator()(const MethodConfig& c) {
    validate_config(c, presets_);
    const std::string m = canonical_method(c.method);
    const auto& p = c.params;
    if (m == "sheet") {
      const auto s = sheet_params(p);
      return threshold(response(c, [&] { return sheet_response(vol_, s.sigma, s.rho, s.delta); }), s.t1);
    }
    if (m == "frangi") {
      const auto f = frangi_params(p);
      return threshold(response(c, [&] { return frangi_response(vol_, f); }), f.t2);
    }
    if (m == "template") {
      const auto t = template_params(p);
      return threshold(response(c, [&] { return template_scores(vol_, t); }), t.t4);
    }
    if (m == "adaptive") {
      const auto a = adaptive_params(p);
      return adaptive_threshold(response(c, [&] { return adaptive_difference(vol_, a); }), a.k);
    }
    if (m == "minpath") {
      const auto mp = minpath_params(p);
      const Volume& h = response(c, [&] { return minimal_path_coherence(vol_, mp); });
      BinaryMask out(vol_.dims());
      for (std::size_t i = 0; i < h.size(); ++i)
        if (double(h[i]) <= mp.t3) out.set(i);
      return out;
    }
    if (m == "hp") {
      const auto hp = percolation_params(p);
      const BinaryMask pre = (*this)(presets_.get(c.preselect));
      const Volume& counts = response(c, [&] {
        const auto n = percolation_counts(vol_, pre, hp);
        Volume v(vol_.dims());
        for (std::size_t i = 0; i < n.size(); ++i) v[i] = float(n[i]);
        return v;
      });
      BinaryMask out(vol_.dims());
      const double need = std::max(hp.tau, 1.0);
      for (std::size_t i = 0; i < counts.size(); ++i)
        if (double(counts[i]) >= need) out.set(i);
      return out;
    }
    if (m == "rf") {
      if (!forest_) {
        if (c.model.empty()) throw ConfigError("rf needs a trained model (--model)");
        forest_ = std::make_shared<const Forest>(load_forest(c.model));
      }
      return predict_forest(*forest_, vol_);
    }
    throw ConfigError("method " + m + " is provided by the Python U-Net baseline, not by this tool");
  }

 private:
  template <class Compute>
  const Volume& response(const MethodConfig& c, Compute&& compute) {
    const auto& info = method_info(c.method);
    std::ostringstream key;
    key.precision(17);
    key << info.name << '|' << c.preselect;
    for (const auto& [k, v] : c.params)
      if (k != info.threshold) key << '|' << k << '=' << v;
    auto it = cache_.find(key.str());
    if (it == cache_.end()) it = cache_.emplace(key.str(), compute()).first;
    return it->second;
  }

  const Volume& vol_;
  const PresetTable& presets_;
  std::shared_ptr<const Forest> forest_;
  std::map<std::string, Volume> cache_;
};

inline BinaryMask segment(const Volume& vol, const MethodConfig& c, std::shared_ptr<const Forest> forest = nullptr) {
  Segmenter s(vol);
  if (forest) s.set_forest(std::move(forest));
  return s(c);
}

}  // namespace crackseg

#endif  // CRACKSEG_METHODS_HPP
