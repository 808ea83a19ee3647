// Command-line entry point. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 compute error.

#include <crackseg/adaptive_morph.hpp>
#include <crackseg/dataset.hpp>
#include <crackseg/errors.hpp>
#include <crackseg/features.hpp>
#include <crackseg/forest.hpp>
#include <crackseg/methods.hpp>
#include <crackseg/metrics.hpp>
#include <crackseg/parallel.hpp>
#include <crackseg/percolation.hpp>
#include <crackseg/pipeline.hpp>
#include <crackseg/report.hpp>
#include <crackseg/tuning.hpp>
#include <crackseg/volume_io.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace crackseg;
using nlohmann::ordered_json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string out;
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
}

/// Method config from --preset / --config / --method with --param k=v.
MethodConfig method_from_flags(const std::string& preset, const std::string& config, const std::string& method,
                               const std::vector<std::string>& params, const std::string& model) {
  nlohmann::json j;
  if (!config.empty()) j = read_json(config);
  if (!preset.empty()) j["preset"] = preset;
  if (!method.empty()) j["method"] = method;
  if (!j.contains("preset") && !j.contains("method")) throw ConfigError("give --preset, --config or --method");
  for (const auto& kv : params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--param expects name=value, got '" + kv + "'");
    try {
      j["params"][kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("--param value is not a number: '" + kv + "'");
    }
  }
  if (!model.empty()) j["model"] = model;
  return method_config_from_json(j);
}

std::vector<int> parse_tols(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const int t = std::stoi(tok, &used);
      if (used != tok.size() || t < 0) throw std::invalid_argument(tok);
      out.push_back(t);
    } catch (const std::exception&) {
      throw ConfigError("bad tolerance list '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty tolerance list");
  return out;
}

ordered_json metrics_json(const BinaryMask& pred, const BinaryMask& truth, int tol) {
  const ConfusionCounts c = confusion_with_tolerance(pred, truth, tol);
  const Metrics m = prf1(c);
  return {{"tol", tol},
          {"tp", c.tp},
          {"fp", c.fp},
          {"fn", c.fn},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1}};
}

/// Reads a metrics CSV as written by write_csv.
std::vector<ResultRow> read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("method,width,image_id,tol,precision,recall,f1", 0) != 0)
    throw FormatError(p.string() + ": not a metrics CSV");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 7) throw FormatError(p.string() + ": bad row '" + line + "'");
    ResultRow r;
    try {
      r.method = f[0];
      r.width = std::stoi(f[1]);
      r.image_id = f[2];
      r.tol = std::stoi(f[3]);
      r.metrics.precision = std::stod(f[4]);
      r.metrics.recall = std::stod(f[5]);
      r.metrics.f1 = std::stod(f[6]);
    } catch (const std::exception&) {
      throw FormatError(p.string() + ": bad row '" + line + "'");
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw FormatError(p.string() + ": no rows");
  return rows;
}

const ManifestEntry& find_entry(const Manifest& m, const std::string& id) {
  for (const auto& e : m.entries)
    if (e.id == id) return e;
  throw ConfigError("no image '" + id + "' in the manifest");
}

int exit_code_for(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError&) {
    return 2;
  } catch (const ParameterError&) {
    return 2;
  } catch (const FormatError&) {
    return 3;
  } catch (const CorruptFileError&) {
    return 3;
  } catch (const ShapeError&) {
    return 3;
  } catch (const IoError&) {
    return 3;
  } catch (const GenerationError&) {
    return 4;
  } catch (const TrainingError&) {
    return 4;
  } catch (const ContractError&) {
    return 4;
  } catch (const Error&) {
    return 4;
  } catch (...) {
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crack segmentation in 3d images: synthesis, segmentation, evaluation."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed (overrides config/recipe seeds)");
  app.add_option("--threads", g.threads, "Worker threads, 0 = all cores");
  app.add_option("--out", g.out, "Output file or directory");
  app.set_version_flag("--version", kToolVersion);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a semi-synthetic dataset from a recipe");
  std::string recipe_path;
  gen->add_option("--recipe", recipe_path, "Recipe JSON")->required()->check(CLI::ExistingFile);

  // segment
  auto* seg = app.add_subcommand("segment", "Segment one volume");
  std::string seg_in, seg_preset, seg_config, seg_method, seg_model, seg_pre_mask, seg_pre_frangi;
  std::vector<std::string> seg_params;
  seg->add_option("--input", seg_in, "Gray volume (.vol)")->required();
  seg->add_option("--preset", seg_preset, "Preset name, e.g. frangi/w3/recall");
  seg->add_option("--config", seg_config, "Method config JSON");
  seg->add_option("--method", seg_method, "Method name");
  seg->add_option("--param", seg_params, "name=value override (repeatable)");
  seg->add_option("--model", seg_model, "Trained forest for rf");
  seg->add_option("--preselect", seg_pre_mask, "percolation: preselection mask file");
  seg->add_option("--preselect-frangi", seg_pre_frangi, "percolation: Frangi config JSON for the preselection");

  // train-rf
  auto* trf = app.add_subcommand("train-rf", "Train a random forest on a manifest's train split");
  std::string trf_manifest, trf_bank;
  int trf_width = 0;
  int trf_trees = 100, trf_depth = 50;
  std::size_t trf_cap = 2000;
  double trf_ratio = 3.0;
  trf->add_option("--manifest", trf_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  trf->add_option("--bank", trf_bank, "Feature bank JSON (default: the 60-feature bank)");
  trf->add_option("--width", trf_width, "Use only train images of this crack width (0 = all)");
  trf->add_option("--trees", trf_trees, "Number of trees");
  trf->add_option("--depth", trf_depth, "Maximal tree depth");
  trf->add_option("--crack-cap", trf_cap, "Crack samples per image");
  trf->add_option("--background-ratio", trf_ratio, "Background samples per crack sample");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Compare a predicted mask with the truth");
  std::string ev_pred, ev_truth, ev_tol = "0,1";
  ev->add_option("--pred", ev_pred, "Predicted mask")->required();
  ev->add_option("--truth", ev_truth, "Ground-truth mask")->required();
  ev->add_option("--tol", ev_tol, "Comma-separated tolerances");

  // tune
  auto* tune = app.add_subcommand("tune", "Coordinate grid search of one method on one image");
  std::string tu_manifest, tu_method, tu_preset, tu_grid, tu_pair, tu_objective;
  std::optional<double> tu_min_recall, tu_min_precision;
  int tu_tol = 0;
  tune->add_option("--manifest", tu_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  tune->add_option("--method", tu_method, "Method name");
  tune->add_option("--preset", tu_preset, "Preset supplying the starting point");
  tune->add_option("--grid", tu_grid, "Grid JSON")->required()->check(CLI::ExistingFile);
  tune->add_option("--pair", tu_pair, "Image id in the manifest")->required();
  tune->add_option("--objective", tu_objective, "precision | recall | f1 (overrides the grid)");
  tune->add_option("--min-recall", tu_min_recall, "Recall floor when optimizing precision");
  tune->add_option("--min-precision", tu_min_precision, "Precision floor when optimizing recall");
  tune->add_option("--tol", tu_tol, "Tolerance");

  // report
  auto* rep = app.add_subcommand("report", "Summarize a metrics CSV");
  std::vector<std::string> rep_csv;
  rep->add_option("--csv", rep_csv, "Metrics CSV files")->required();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run a declarative end-to-end pipeline");
  std::string pipe_cfg;
  pipe->add_option("--config", pipe_cfg, "Pipeline JSON")->required();
  bool quiet = false;
  pipe->add_flag("--quiet", quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    set_num_threads(g.threads);

    if (*gen) {
      nlohmann::json rj = read_json(recipe_path);
      if (g.seed) rj["seed"] = *g.seed;
      const Recipe r = parse_recipe(rj, fs::path(recipe_path).parent_path());
      const fs::path out = g.out.empty() ? fs::path("dataset") : fs::path(g.out);
      generate_dataset(r, out, [&](std::size_t i, const std::string& id) {
        std::cerr << "[" << i + 1 << "/" << r.entries.size() << "] " << id << "\n";
      });
      std::cout << (out / "manifest.json").string() << "\n";
    } else if (*seg) {
      if (g.out.empty()) throw ConfigError("segment needs --out for the mask");
      const Volume vol = read_volume(seg_in);
      BinaryMask mask;
      if (!seg_pre_mask.empty() || !seg_pre_frangi.empty()) {
        // The preselection comes from the flags, so the config itself needs none.
        MethodConfig c;
        c.method = "hp";
        if (!seg_preset.empty()) c = PresetTable::builtin().get(seg_preset);
        if (!seg_config.empty()) c = method_from_flags("", seg_config, "", {}, "");
        if (!seg_method.empty() && canonical_method(seg_method) != canonical_method(c.method))
          throw ConfigError("--preselect applies to percolation only");
        for (const auto& kv : seg_params) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw ConfigError("--param expects name=value, got '" + kv + "'");
          c.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        }
        if (canonical_method(c.method) != "hp") throw ConfigError("--preselect applies to percolation only");
        BinaryMask pre;
        if (!seg_pre_mask.empty()) {
          pre = read_mask(seg_pre_mask);
        } else {
          const MethodConfig fc = method_from_flags("", seg_pre_frangi, "", {}, "");
          if (canonical_method(fc.method) != "frangi") throw ConfigError("--preselect-frangi needs a frangi config");
          pre = segment(vol, fc);
        }
        mask = hessian_percolation(vol, pre, percolation_params(c.params));
      } else {
        mask = segment(vol, method_from_flags(seg_preset, seg_config, seg_method, seg_params, seg_model));
      }
      write_mask(g.out, mask);
      std::cerr << mask.count() << " crack voxels\n";
    } else if (*trf) {
      if (g.out.empty()) throw ConfigError("train-rf needs --out for the model file");
      const Manifest m = load_manifest(trf_manifest);
      const FeatureBankConfig bank = trf_bank.empty() ? default_bank() : feature_bank_from_json(read_json(trf_bank));
      std::vector<LabeledVolume> pairs;
      for (const auto* e : m.select(Split::train))
        if (trf_width == 0 || e->width == trf_width) pairs.push_back({read_volume(e->gray_path), read_mask(e->truth_path)});
      if (pairs.empty()) throw TrainingError("no training images selected");
      const std::uint64_t seed = g.seed.value_or(0);
      SamplingParams sp{trf_cap, trf_ratio, derive_seed(seed, {1})};
      const TrainingSet ts = assemble_training(pairs, bank, sp);
      std::cerr << ts.labels.size() << " training rows, " << ts.dim << " features\n";
      ForestParams fp;
      fp.n_trees = trf_trees;
      fp.max_depth = trf_depth;
      fp.seed = derive_seed(seed, {2});
      save_forest(g.out, train_forest(ts, bank, fp));
    } else if (*ev) {
      const BinaryMask pred = read_mask(ev_pred), truth = read_mask(ev_truth);
      ordered_json j = ordered_json::array();
      for (int t : parse_tols(ev_tol)) j.push_back(metrics_json(pred, truth, t));
      emit(j.dump(2) + "\n", g.out);
    } else if (*tune) {
      GridSpec grid = grid_from_json(read_json(tu_grid));
      if (!tu_objective.empty()) grid.objective = parse_objective(tu_objective);
      if (tu_min_recall) grid.min_complement = *tu_min_recall;
      if (tu_min_precision) grid.min_complement = *tu_min_precision;
      MethodConfig base;
      if (!tu_preset.empty()) {
        base = PresetTable::builtin().get(tu_preset);
      } else if (!tu_method.empty()) {
        base.method = canonical_method(tu_method);
        method_info(base.method);
      } else {
        throw ConfigError("tune needs --method or --preset");
      }
      if (!tu_method.empty() && canonical_method(tu_method) != canonical_method(base.method))
        throw ConfigError("--method and --preset disagree");
      for (const auto& [name, values] : grid.params) {
        const auto& names = method_info(base.method).params;
        if (std::find(names.begin(), names.end(), name) == names.end())
          throw ConfigError("grid parameter '" + name + "' is not a parameter of " + base.method);
      }
      const Manifest m = load_manifest(tu_manifest);
      const ManifestEntry& e = find_entry(m, tu_pair);
      const Volume vol = read_volume(e.gray_path);
      const BinaryMask truth = read_mask(e.truth_path);
      Segmenter s(vol);
      const TuneResult r = coordinate_grid_search(
          [&](const ParamMap& p) {
            MethodConfig c = base;
            for (const auto& [k, v] : p) c.params[k] = v;
            return s(c);
          },
          truth, grid, tu_tol, base.params);
      ordered_json j = trace_json(r);
      j["method"] = base.method;
      j["image_id"] = e.id;
      j["objective"] = objective_name(grid.objective);
      j["tol"] = tu_tol;
      emit(j.dump(2) + "\n", g.out);
    } else if (*rep) {
      std::vector<ResultRow> rows;
      for (const auto& p : rep_csv) {
        auto r = read_csv(p);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      emit(summarize_rows(rows).dump(2) + "\n", g.out);
    } else if (*pipe) {
      nlohmann::json j = read_json(pipe_cfg);
      if (g.seed) j["seed"] = *g.seed;
      if (!g.out.empty()) j["out"] = fs::absolute(g.out).string();
      const PipelineConfig cfg = parse_pipeline(j, fs::path(pipe_cfg).parent_path());
      const auto res = run_pipeline(cfg, PresetTable::builtin(), [&](const std::string& msg) {
        if (!quiet) std::cerr << msg << "\n";
      });
      std::cout << (cfg.out / "metrics.csv").string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "crackseg: " << e.what() << "\n";
    return exit_code_for(std::current_exception());
  }
  return 0;
}
