///   @file dataset.hpp
///   @brief Recipes, dataset generation and the manifest format.
///
/// Recipe (JSON):
///   {"seed": 1, "size": 256, "hurst": 0.99, "relief": 0.2,
///    "phantom": "realistic" | {...}, "transition_sigma": 1.0,
///    "crack_gray": {"mean": m, "std": s},            (default: pore stats)
///    "groups":  [{"width": 3, "single": 8, "parallel": 6, "orthogonal": 6}],
///    "entries": [{"width": 1, "arrangement": "single", ...overrides}]}
/// Group entries come first, then explicit entries. Any top-level field can
/// be overridden per entry; entries may also name a "background" volume
/// file (then "crack_gray" is required) and a fixed "split".
///
/// Manifest (manifest.json next to gray/ and truth/):
///   {"format": "crackseg-manifest", "version": 1, "seed": ..., "entries": [
///     {"id", "width", "arrangement", "plane", "hurst", "relief", "dims",
///      "gray_path", "truth_path", "split": "train"|"val"|"eval",
///      "seeds": {"crack", "phantom", "composite"}, ...}],
///    "splits": {"train": [ids], "val": [ids], "eval": [ids]}}
/// Paths are relative to the manifest directory. Validation images are also
/// listed under "eval": every non-training image is evaluated.

#ifndef CRACKSEG_DATASET_HPP
#define CRACKSEG_DATASET_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "random.hpp"
#include "synthesis.hpp"
#include "volume_io.hpp"

namespace crackseg {

using ordered_json = nlohmann::ordered_json;

enum class Split { train, val, eval };

inline const char* split_name(Split s) { return s == Split::train ? "train" : s == Split::val ? "val" : "eval"; }
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "eval") return Split::eval;
  throw ConfigError("unknown split '" + s + "'");
}

struct RecipeEntry {
  std::string id;
  CrackSpec crack;
  std::optional<PhantomSpec> phantom;              ///< unset when `background` is given
  std::string phantom_name;                        ///< preset name or "custom"
  std::optional<std::filesystem::path> background;
  CompositeParams composite;
  std::optional<Split> split;
  std::uint64_t phantom_seed = 0;
};

struct Recipe {
  std::uint64_t seed = 0;
  std::vector<RecipeEntry> entries;
};

namespace detail {

inline std::size_t log2_exact(std::size_t size) {
  std::size_t n = 0;
  while ((std::size_t{1} << n) < size) ++n;
  if ((std::size_t{1} << n) != size || n < 3 || n > 12)
    throw ConfigError("recipe size must be a power of two between 8 and 4096, got " + std::to_string(size));
  return n;
}

template <class Json>
GrayStats gray_from_json(const Json& j, GrayStats def) {
  return {j.value("mean", def.mean), j.value("std", def.std)};
}

template <class Json>
InclusionSpec inclusion_from_json(const Json& j, InclusionSpec s) {
  s.fraction = j.value("fraction", s.fraction);
  if (j.contains("radius")) {
    s.radius_min = j.at("radius").at(0).template get<double>();
    s.radius_max = j.at("radius").at(1).template get<double>();
  }
  s.gray = gray_from_json(j, s.gray);
  return s;
}

}  // namespace detail

/// Phantom from a preset name or an object {"preset", "matrix", "aggregate",
/// "pore", "blur_sigma"} overriding preset fields.
template <class Json>
PhantomSpec phantom_from_json(const Json& j, Dims dims, std::uint64_t seed, std::string* name = nullptr) {
  if (j.is_string()) {
    if (name) *name = j.template get<std::string>();
    return phantom_preset(j.template get<std::string>(), dims, seed);
  }
  if (!j.is_object()) throw ConfigError("phantom must be a preset name or an object");
  PhantomSpec s = phantom_preset(j.value("preset", std::string("realistic")), dims, seed);
  if (name) *name = "custom";
  if (j.contains("matrix")) s.matrix = detail::gray_from_json(j.at("matrix"), s.matrix);
  if (j.contains("aggregate")) s.aggregate = detail::inclusion_from_json(j.at("aggregate"), s.aggregate);
  if (j.contains("pore")) s.pore = detail::inclusion_from_json(j.at("pore"), s.pore);
  s.blur_sigma = j.value("blur_sigma", s.blur_sigma);
  s.validate();
  return s;
}

/// Expands a recipe JSON into concrete entries with derived seeds.
/// `base_dir` resolves relative background paths.
inline Recipe parse_recipe(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  Recipe r;
  try {
    r.seed = j.value("seed", std::uint64_t{0});
    std::vector<nlohmann::json> items;
    if (j.contains("groups"))
      for (const auto& g : j.at("groups"))
        for (const char* arr : {"single", "parallel", "orthogonal"})
          for (int k = 0; k < g.value(arr, 0); ++k) {
            nlohmann::json e = g;
            for (const char* key : {"single", "parallel", "orthogonal"}) e.erase(key);
            e["arrangement"] = arr;
            items.push_back(e);
          }
    if (j.contains("entries"))
      for (const auto& e : j.at("entries")) items.push_back(e);

    std::map<std::string, int> counters;
    for (std::size_t idx = 0; idx < items.size(); ++idx) {
      const auto& e = items[idx];
      auto get = [&](const char* key) -> const nlohmann::json* {
        if (e.contains(key)) return &e.at(key);
        if (j.contains(key)) return &j.at(key);
        return nullptr;
      };
      RecipeEntry re;
      const std::size_t size = get("size") ? get("size")->get<std::size_t>() : 256;
      const Dims dims{size, size, size};
      re.crack.n = int(detail::log2_exact(size));
      re.crack.width = get("width") ? get("width")->get<int>() : 3;
      re.crack.hurst = get("hurst") ? get("hurst")->get<double>() : 0.99;
      re.crack.relief = get("relief") ? get("relief")->get<double>() : 0.2;
      re.crack.plane = parse_axis(get("plane") ? get("plane")->get<std::string>() : "z");
      re.crack.arrangement = parse_arrangement(e.value("arrangement", std::string("single")));
      re.crack.seed = derive_seed(r.seed, {idx, 1});
      re.crack.validate();
      re.phantom_seed = derive_seed(r.seed, {idx, 2});
      re.composite.seed = derive_seed(r.seed, {idx, 3});
      re.composite.transition_sigma = get("transition_sigma") ? get("transition_sigma")->get<double>() : 1.0;
      if (e.contains("background")) {
        std::filesystem::path bg = e.at("background").get<std::string>();
        re.background = bg.is_relative() ? base_dir / bg : bg;
        if (!get("crack_gray")) throw ConfigError("entry with a background file needs crack_gray");
      } else {
        re.phantom = phantom_from_json(get("phantom") ? *get("phantom") : nlohmann::json("realistic"), dims,
                                       re.phantom_seed, &re.phantom_name);
      }
      const GrayStats def = re.phantom ? re.phantom->pore.gray : GrayStats{};
      const GrayStats cg = get("crack_gray") ? detail::gray_from_json(*get("crack_gray"), def) : def;
      re.composite.crack_gray_mean = cg.mean;
      re.composite.crack_gray_std = cg.std;
      if (e.contains("split")) re.split = parse_split(e.at("split").get<std::string>());
      const std::string stem = "w" + std::to_string(re.crack.width) + "_" + arrangement_name(re.crack.arrangement);
      char num[16];
      std::snprintf(num, sizeof num, "_%02d", ++counters[stem]);
      re.id = e.value("id", stem + num);
      r.entries.push_back(std::move(re));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("recipe: ") + ex.what());
  }
  std::map<std::string, int> seen;
  for (const auto& e : r.entries)
    if (++seen[e.id] > 1) throw ConfigError("duplicate recipe id '" + e.id + "'");
  return r;
}

inline Recipe load_recipe(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open recipe " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_recipe(j, path.parent_path());
}

/// Per width: the first image of each arrangement trains, the next single
/// crack validates, everything else evaluates. Fixed splits are kept.
inline std::vector<Split> assign_splits(const std::vector<RecipeEntry>& entries) {
  std::vector<Split> out(entries.size(), Split::eval);
  std::map<std::pair<int, int>, int> taken;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split) {
      out[i] = *entries[i].split;
      continue;
    }
    const int w = entries[i].crack.width;
    const int a = int(entries[i].crack.arrangement);
    const int k = taken[{w, a}]++;
    if (k == 0)
      out[i] = Split::train;
    else if (k == 1 && entries[i].crack.arrangement == Arrangement::single)
      out[i] = Split::val;
  }
  return out;
}

struct ManifestEntry {
  std::string id;
  int width = 0;
  Arrangement arrangement = Arrangement::single;
  Split split = Split::eval;
  std::filesystem::path gray_path;   ///< absolute after loading
  std::filesystem::path truth_path;  ///< absolute after loading
};

struct Manifest {
  std::filesystem::path dir;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> select(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == s || (s == Split::eval && e.split == Split::val)) out.push_back(&e);
    return out;
  }
};

/// A single generated image.
struct GeneratedImage {
  Volume gray;
  BinaryMask truth;
};

inline GeneratedImage generate_image(const RecipeEntry& e) {
  GeneratedImage g;
  g.truth = crack_mask(e.crack);
  Volume background = e.background ? read_volume(*e.background) : synthesize_background(*e.phantom);
  require_same_dims(background.dims(), g.truth.dims(), "background vs crack");
  g.gray = composite(background, g.truth, e.composite);
  return g;
}

/// Writes gray/<id>.vol, truth/<id>.mask and manifest.json under out_dir.
/// Returns the manifest JSON.
inline ordered_json generate_dataset(const Recipe& recipe, const std::filesystem::path& out_dir,
                                     const std::function<void(std::size_t, const std::string&)>& progress = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const auto splits = assign_splits(recipe.entries);
  ordered_json manifest;
  manifest["format"] = "crackseg-manifest";
  manifest["version"] = 1;
  manifest["seed"] = recipe.seed;
  manifest["entries"] = ordered_json::array();
  ordered_json summary = {{"train", ordered_json::array()}, {"val", ordered_json::array()}, {"eval", ordered_json::array()}};
  if (!recipe.entries.empty()) {
    fs::create_directories(out_dir / "gray");
    fs::create_directories(out_dir / "truth");
  }
  for (std::size_t i = 0; i < recipe.entries.size(); ++i) {
    const RecipeEntry& e = recipe.entries[i];
    if (progress) progress(i, e.id);
    GeneratedImage img = generate_image(e);
    const std::string gray_rel = "gray/" + e.id + ".vol", truth_rel = "truth/" + e.id + ".mask";
    write_volume(out_dir / gray_rel, img.gray);
    write_mask(out_dir / truth_rel, img.truth);
    const Dims d = img.gray.dims();
    ordered_json m;
    m["id"] = e.id;
    m["width"] = e.crack.width;
    m["arrangement"] = arrangement_name(e.crack.arrangement);
    m["plane"] = axis_name(e.crack.plane);
    m["hurst"] = e.crack.hurst;
    m["relief"] = e.crack.relief;
    m["dims"] = {d.nx, d.ny, d.nz};
    m["gray_path"] = gray_rel;
    m["truth_path"] = truth_rel;
    m["split"] = split_name(splits[i]);
    m["seeds"] = {{"crack", e.crack.seed}, {"phantom", e.phantom_seed}, {"composite", e.composite.seed}};
    if (e.background)
      m["background"] = e.background->string();
    else
      m["phantom"] = e.phantom_name;
    m["crack_gray"] = {{"mean", e.composite.crack_gray_mean}, {"std", e.composite.crack_gray_std}};
    m["transition_sigma"] = e.composite.transition_sigma;
    m["crack_voxels"] = img.truth.count();
    manifest["entries"].push_back(m);
    summary[split_name(splits[i])].push_back(e.id);
    if (splits[i] == Split::val) summary["eval"].push_back(e.id);
  }
  manifest["splits"] = summary;
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.dir = path.parent_path();
  try {
    const auto j = nlohmann::json::parse(is);
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.width = e.at("width").get<int>();
      me.arrangement = parse_arrangement(e.value("arrangement", std::string("single")));
      me.split = parse_split(e.at("split").get<std::string>());
      me.gray_path = m.dir / e.at("gray_path").get<std::string>();
      me.truth_path = m.dir / e.at("truth_path").get<std::string>();
      m.entries.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  return m;
}

}  // namespace crackseg

#endif  // CRACKSEG_DATASET_HPP
