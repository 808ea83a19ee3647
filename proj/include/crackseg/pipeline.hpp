///   @file pipeline.hpp
///   @brief Declarative end-to-end runs: generate, segment, evaluate, report.
///
/// A pipeline config is JSON:
///   {
///     "dataset": {"recipe": "r.json"} | {"manifest": "dir/manifest.json"},
///     "methods": ["frangi/w3/recall", "sheet/w{width}/precision",
///                 {"preset": ..., "params": {...}, "label": ...},
///                 {"method": ..., "params": {...}}, "cfg.json"],
///     "tols": [0, 1],
///     "seed": 7,
///     "out": "runs/demo",
///     "write_masks": true,
///     "forest": {"crack_cap": 2000, "background_ratio": 3}
///   }
/// "{width}" in a preset name is replaced by each image's crack width. Relative
/// paths resolve against the config file's directory. A seed replaces the
/// recipe's seed. rf methods without a model train one forest per crack width
/// on the manifest's train split.
///
/// Outputs under out: dataset/ (when generated), masks/<label>/<id>.mask,
/// models/, metrics.csv, summary.json, provenance.json. Everything except the
/// timings in provenance.json is a function of the config alone.

#ifndef CRACKSEG_PIPELINE_HPP
#define CRACKSEG_PIPELINE_HPP

#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "errors.hpp"
#include "features.hpp"
#include "forest.hpp"
#include "methods.hpp"
#include "metrics.hpp"
#include "report.hpp"
#include "volume_io.hpp"

namespace crackseg {

inline constexpr const char* kToolVersion = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// One method of a pipeline: a config, possibly width-templated.
struct PipelineMethod {
  std::string label;
  std::string preset_template;      ///< non-empty when the preset name contains {width}
  nlohmann::json overrides;         ///< params applied on top of a templated preset
  std::optional<MethodConfig> fixed;
};

struct PipelineConfig {
  std::filesystem::path recipe;
  std::filesystem::path manifest;
  std::vector<PipelineMethod> methods;
  std::vector<int> tols{0, 1};
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  bool write_masks = true;
  SamplingParams sampling;
  nlohmann::ordered_json source;  ///< normalized config, hashed into provenance
};

namespace detail {

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

inline std::string label_for(const std::string& preset) { return replace_all(preset, "/w{width}", ""); }

/// Directory-safe form of a label.
inline std::string slug(const std::string& s) {
  std::string o;
  for (char c : s) o += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return o;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_relative() ? base / p : p;
}

inline MethodConfig instantiate(const PipelineMethod& m, int width, const PresetTable& presets) {
  if (m.fixed) return *m.fixed;
  nlohmann::json j = m.overrides;
  j["preset"] = replace_all(m.preset_template, "{width}", std::to_string(width));
  return method_config_from_json(j, presets);
}

}  // namespace detail

/// Parses and validates a pipeline config. Every preset name, method file and
/// dataset path is checked here, before any computation.
inline PipelineConfig parse_pipeline(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                                     const PresetTable& presets = PresetTable::builtin()) {
  namespace fs = std::filesystem;
  PipelineConfig c;
  try {
    const auto& ds = j.at("dataset");
    if (ds.contains("recipe") == ds.contains("manifest"))
      throw ConfigError("dataset needs exactly one of recipe or manifest");
    if (ds.contains("recipe")) {
      c.recipe = detail::resolve(base_dir, ds.at("recipe").get<std::string>());
      if (!fs::exists(c.recipe)) throw ConfigError("recipe not found: " + c.recipe.string());
    } else {
      c.manifest = detail::resolve(base_dir, ds.at("manifest").get<std::string>());
      if (!fs::exists(c.manifest)) throw ConfigError("manifest not found: " + c.manifest.string());
    }
    if (j.contains("tols")) c.tols = j.at("tols").get<std::vector<int>>();
    if (c.tols.empty()) throw ConfigError("tols must not be empty");
    for (int t : c.tols)
      if (t < 0) throw ConfigError("tolerances must be >= 0");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out")) c.out = detail::resolve(base_dir, j.at("out").get<std::string>());
    c.write_masks = j.value("write_masks", true);
    if (j.contains("forest")) {
      const auto& f = j.at("forest");
      c.sampling.crack_cap = f.value("crack_cap", c.sampling.crack_cap);
      c.sampling.background_ratio = f.value("background_ratio", c.sampling.background_ratio);
    }

    const auto& ms = j.at("methods");
    if (!ms.is_array() || ms.empty()) throw ConfigError("methods must be a non-empty list");
    std::map<std::string, int> seen;
    for (const auto& item : ms) {
      PipelineMethod pm;
      nlohmann::json spec;
      if (item.is_string()) {
        const std::string s = item.get<std::string>();
        if (s.ends_with(".json")) {
          const fs::path p = detail::resolve(base_dir, s);
          std::ifstream is(p);
          if (!is) throw ConfigError("method file not found: " + p.string());
          try {
            spec = nlohmann::json::parse(is);
          } catch (const nlohmann::json::exception& e) {
            throw ConfigError(p.string() + ": " + e.what());
          }
          if (spec.contains("model") && spec.at("model").is_string())
            spec["model"] = detail::resolve(p.parent_path(), spec.at("model").get<std::string>()).string();
          if (!spec.contains("label")) spec["label"] = p.stem().string();
        } else {
          spec = {{"preset", s}};
        }
      } else {
        spec = item;
        if (spec.contains("model") && spec.at("model").is_string())
          spec["model"] = detail::resolve(base_dir, spec.at("model").get<std::string>()).string();
      }
      const std::string preset = spec.value("preset", std::string());
      pm.label = spec.value("label", preset.empty() ? spec.value("method", std::string("method")) : detail::label_for(preset));
      spec.erase("label");
      if (preset.find("{width}") != std::string::npos) {
        pm.preset_template = preset;
        pm.overrides = spec;
        pm.overrides.erase("preset");
        for (int w : {1, 3, 5}) detail::instantiate(pm, w, presets);  // validates every width
      } else {
        pm.fixed = method_config_from_json(spec, presets);
      }
      if (++seen[pm.label] > 1) throw ConfigError("duplicate method label '" + pm.label + "'");
      c.methods.push_back(std::move(pm));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  nlohmann::ordered_json src = nlohmann::ordered_json::parse(j.dump());
  c.source = src;
  return c;
}

inline PipelineConfig load_pipeline(const std::filesystem::path& path,
                                    const PresetTable& presets = PresetTable::builtin()) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open pipeline config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_pipeline(j, path.parent_path(), presets);
}

struct PipelineResult {
  std::vector<ResultRow> rows;
  nlohmann::ordered_json summary;
  nlohmann::ordered_json provenance;
};

/// Runs the pipeline. On failure provenance.json is still written, marked
/// partial with the failing stage, and the error is rethrown.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const PresetTable& presets = PresetTable::builtin(),
                                   const std::function<void(const std::string&)>& log = {}) {
  namespace fs = std::filesystem;
  if (cfg.out.empty()) throw ConfigError("pipeline needs an output directory");
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create " + cfg.out.string() + ": " + ec.message());

  PipelineResult res;
  auto& prov = res.provenance;
  prov["tool"] = "crackseg";
  prov["version"] = kToolVersion;
  prov["config_hash"] = "fnv1a64:" + hex64(fnv1a64(cfg.source.dump()));
  prov["config"] = cfg.source;
  prov["stages"] = nlohmann::ordered_json::array();
  std::vector<std::string> artifacts;
  std::string stage;
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  auto write_provenance = [&](bool complete) {
    prov["status"] = complete ? "complete" : "partial";
    if (!complete) prov["failed_stage"] = stage;
    prov["artifacts"] = artifacts;
    detail::write_text(cfg.out / "provenance.json", prov.dump(2) + "\n");
  };
  auto timed = [&](const std::string& name, auto&& fn) {
    stage = name;
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    prov["stages"].push_back({{"stage", name}, {"seconds", s}});
  };

  try {
    fs::path manifest_path = cfg.manifest;
    if (!cfg.recipe.empty()) {
      timed("generate", [&] {
        nlohmann::json rj;
        {
          std::ifstream is(cfg.recipe);
          if (!is) throw IoError("cannot open recipe " + cfg.recipe.string());
          try {
            rj = nlohmann::json::parse(is);
          } catch (const nlohmann::json::exception& e) {
            throw ConfigError(cfg.recipe.string() + ": " + e.what());
          }
        }
        if (cfg.seed) rj["seed"] = *cfg.seed;
        const Recipe r = parse_recipe(rj, cfg.recipe.parent_path());
        say("generating " + std::to_string(r.entries.size()) + " images");
        generate_dataset(r, cfg.out / "dataset");
        manifest_path = cfg.out / "dataset" / "manifest.json";
        artifacts.push_back("dataset/manifest.json");
      });
    }
    Manifest manifest;
    timed("load", [&] { manifest = load_manifest(manifest_path); });
    const auto eval = manifest.select(Split::eval);
    if (eval.empty()) throw ConfigError("the dataset has no evaluation images");

    // Forests for rf methods without a model, one per (label, width).
    std::map<std::pair<std::string, int>, std::shared_ptr<const Forest>> forests;
    timed("train", [&] {
      const std::uint64_t seed = cfg.seed.value_or(0);
      for (const auto& m : cfg.methods)
        for (const auto* e : eval) {
          const MethodConfig mc = detail::instantiate(m, e->width, presets);
          if (canonical_method(mc.method) != "rf" || !mc.model.empty()) continue;
          const auto key = std::make_pair(m.label, e->width);
          if (forests.count(key)) continue;
          std::vector<LabeledVolume> pairs;
          for (const auto* t : manifest.select(Split::train))
            if (t->width == e->width) pairs.push_back({read_volume(t->gray_path), read_mask(t->truth_path)});
          if (pairs.empty())
            throw TrainingError("no training images of width " + std::to_string(e->width) + " for " + m.label);
          say("training " + m.label + " for width " + std::to_string(e->width));
          SamplingParams sp = cfg.sampling;
          sp.seed = derive_seed(seed, {std::uint64_t(e->width), 11});
          const TrainingSet ts = assemble_training(pairs, default_bank(), sp);
          auto f = std::make_shared<Forest>(
              train_forest(ts, default_bank(), forest_params(mc.params, derive_seed(seed, {std::uint64_t(e->width), 12}))));
          const std::string rel = "models/" + detail::slug(m.label) + "_w" + std::to_string(e->width) + ".forest";
          fs::create_directories(cfg.out / "models");
          save_forest(cfg.out / rel, *f);
          artifacts.push_back(rel);
          forests[key] = std::move(f);
        }
    });

    double seg_s = 0.0, eval_s = 0.0;
    for (const auto* e : eval) {
      stage = "segment";
      auto t0 = std::chrono::steady_clock::now();
      const Volume gray = read_volume(e->gray_path);
      const BinaryMask truth = read_mask(e->truth_path);
      Segmenter seg(gray, presets);
      for (const auto& m : cfg.methods) {
        stage = "segment";
        t0 = std::chrono::steady_clock::now();
        const MethodConfig mc = detail::instantiate(m, e->width, presets);
        auto it = forests.find({m.label, e->width});
        seg.set_forest(it != forests.end() ? it->second : nullptr);
        say("segmenting " + e->id + " with " + m.label);
        const BinaryMask pred = seg(mc);
        if (cfg.write_masks) {
          const std::string rel = "masks/" + detail::slug(m.label) + "/" + e->id + ".mask";
          fs::create_directories((cfg.out / rel).parent_path());
          write_mask(cfg.out / rel, pred);
          artifacts.push_back(rel);
        }
        seg_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        stage = "evaluate";
        t0 = std::chrono::steady_clock::now();
        for (int tol : cfg.tols) res.rows.push_back({m.label, e->width, e->id, tol, evaluate(pred, truth, tol)});
        eval_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    }
    prov["stages"].push_back({{"stage", "segment"}, {"seconds", seg_s}});
    prov["stages"].push_back({{"stage", "evaluate"}, {"seconds", eval_s}});

    timed("report", [&] {
      std::ostringstream csv;
      write_csv(csv, res.rows);
      detail::write_text(cfg.out / "metrics.csv", csv.str());
      artifacts.push_back("metrics.csv");
      res.summary = summarize_rows(res.rows);
      detail::write_text(cfg.out / "summary.json", res.summary.dump(2) + "\n");
      artifacts.push_back("summary.json");
    });
  } catch (...) {
    write_provenance(false);
    throw;
  }
  write_provenance(true);
  return res;
}

}  // namespace crackseg

#endif  // CRACKSEG_PIPELINE_HPP
