///   @file tuning.hpp
///   @brief Single-pass coordinate grid search over segmentation parameters.
///
/// Parameters are swept one at a time in declared order with all others
/// held at the incumbent. Each sweep keeps the value maximizing the
/// objective among points meeting the constraint on the complementary
/// metric (recall when optimizing precision and vice versa); ties keep the
/// earliest value. When no point of a sweep meets the constraint the
/// unconstrained best is kept and the result is flagged.

#ifndef CRACKSEG_TUNING_HPP
#define CRACKSEG_TUNING_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "metrics.hpp"
#include "volume.hpp"

namespace crackseg {

using ParamMap = std::map<std::string, double>;

enum class Objective { precision, recall, f1 };

inline const char* objective_name(Objective o) {
  return o == Objective::precision ? "precision" : o == Objective::recall ? "recall" : "f1";
}
inline Objective parse_objective(const std::string& s) {
  if (s == "precision") return Objective::precision;
  if (s == "recall") return Objective::recall;
  if (s == "f1") return Objective::f1;
  throw ConfigError("unknown objective '" + s + "'");
}

struct GridSpec {
  std::vector<std::pair<std::string, std::vector<double>>> params;  ///< sweep order
  Objective objective = Objective::f1;
  double min_complement = 0.0;  ///< ignored for f1

  void validate() const {
    if (params.empty()) throw ConfigError("grid has no parameters");
    for (const auto& [name, values] : params)
      if (values.empty()) throw ConfigError("grid parameter '" + name + "' has no values");
  }
};

struct TraceEntry {
  ParamMap params;
  Metrics metrics;
  std::string swept;
  bool admissible = true;
};

struct TuneResult {
  ParamMap best;
  Metrics metrics;
  std::vector<TraceEntry> trace;
  bool constraint_violated = false;
};

inline double objective_value(const Metrics& m, Objective o) {
  return o == Objective::precision ? m.precision : o == Objective::recall ? m.recall : m.f1;
}

inline bool admissible(const Metrics& m, const GridSpec& g) {
  switch (g.objective) {
    case Objective::precision: return m.recall >= g.min_complement;
    case Objective::recall: return m.precision >= g.min_complement;
    case Objective::f1: return true;
  }
  return true;
}

using ParamSegmenter = std::function<BinaryMask(const ParamMap&)>;

/// `start` supplies values for parameters not yet swept (and any fixed
/// extras); missing entries default to the first grid value.
inline TuneResult coordinate_grid_search(const ParamSegmenter& segment, const BinaryMask& truth, const GridSpec& grid,
                                         int tol, const ParamMap& start = {}) {
  grid.validate();
  TuneResult r;
  r.best = start;
  for (const auto& [name, values] : grid.params)
    if (!r.best.count(name)) r.best[name] = values.front();
  for (const auto& [name, values] : grid.params) {
    int best_ok = -1, best_any = -1;
    double v_ok = 0, v_any = 0;
    std::vector<Metrics> ms;
    for (std::size_t k = 0; k < values.size(); ++k) {
      ParamMap p = r.best;
      p[name] = values[k];
      const Metrics m = evaluate(segment(p), truth, tol);
      const bool ok = admissible(m, grid);
      r.trace.push_back({p, m, name, ok});
      ms.push_back(m);
      const double v = objective_value(m, grid.objective);
      if (best_any < 0 || v > v_any) best_any = int(k), v_any = v;
      if (ok && (best_ok < 0 || v > v_ok)) best_ok = int(k), v_ok = v;
    }
    const int pick = best_ok >= 0 ? best_ok : best_any;
    if (best_ok < 0) r.constraint_violated = true;
    r.best[name] = values[pick];
    r.metrics = ms[pick];
  }
  return r;
}

template <class Json>
GridSpec grid_from_json(const Json& j) {
  GridSpec g;
  try {
    for (const auto& p : j.at("params")) {
      std::vector<double> values;
      if (p.contains("values")) {
        values = p.at("values").template get<std::vector<double>>();
      } else {
        const double lo = p.at("from").template get<double>(), hi = p.at("to").template get<double>(),
                     step = p.at("step").template get<double>();
        if (!(step > 0.0)) throw ConfigError("grid step must be positive");
        for (int k = 0;; ++k) {
          const double v = lo + k * step;
          if (v > hi + 1e-9 * std::max(1.0, std::abs(hi))) break;
          values.push_back(v);
        }
      }
      g.params.emplace_back(p.at("name").template get<std::string>(), values);
    }
    g.objective = parse_objective(j.value("objective", std::string("f1")));
    g.min_complement = j.value("min_complement", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  g.validate();
  return g;
}

inline nlohmann::ordered_json trace_json(const TuneResult& r) {
  nlohmann::ordered_json j;
  j["best"] = r.best;
  j["metrics"] = {{"precision", r.metrics.precision}, {"recall", r.metrics.recall}, {"f1", r.metrics.f1}};
  j["constraint_violated"] = r.constraint_violated;
  j["trace"] = nlohmann::ordered_json::array();
  for (const auto& t : r.trace)
    j["trace"].push_back({{"swept", t.swept},
                          {"params", t.params},
                          {"precision", t.metrics.precision},
                          {"recall", t.metrics.recall},
                          {"f1", t.metrics.f1},
                          {"admissible", t.admissible}});
  return j;
}

}  // namespace crackseg

#endif  // CRACKSEG_TUNING_HPP
