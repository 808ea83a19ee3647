///   @file report.hpp
///   @brief Per-image result rows, CSV output and grouped summaries.
///
/// CSV columns: method,width,image_id,tol,precision,recall,f1
/// Summary JSON: {"groups": [{"method", "width", "tol", "n",
///   "precision": {"mean", "std", "min", "q1", "median", "q3", "max"},
///   "recall": {...}, "f1": {...}}]}, grouped per method and width.
/// std is the sample standard deviation (n - 1);
/// quantiles interpolate linearly between order statistics.

#ifndef CRACKSEG_REPORT_HPP
#define CRACKSEG_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "metrics.hpp"

namespace crackseg {

struct ResultRow {
  std::string method;
  int width = 0;
  std::string image_id;
  int tol = 0;
  Metrics metrics;
};

struct Summary {
  double mean = 0, std = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Linear interpolation between order statistics at position p (n - 1).
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ParameterError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

inline Summary summarize(const std::vector<double>& v) {
  if (v.empty()) throw ParameterError("summary of an empty sample");
  Summary s;
  double sum = 0;
  for (double x : v) sum += x;
  s.mean = sum / double(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / double(v.size() - 1));
  }
  s.min = quantile(v, 0.0);
  s.q1 = quantile(v, 0.25);
  s.median = quantile(v, 0.5);
  s.q3 = quantile(v, 0.75);
  s.max = quantile(v, 1.0);
  return s;
}

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "method,width,image_id,tol,precision,recall,f1\n";
  for (const auto& r : rows)
    os << r.method << ',' << r.width << ',' << r.image_id << ',' << r.tol << ',' << format_fixed(r.metrics.precision)
       << ',' << format_fixed(r.metrics.recall) << ',' << format_fixed(r.metrics.f1) << '\n';
}

inline nlohmann::ordered_json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"q1", s.q1},
          {"median", s.median}, {"q3", s.q3}, {"max", s.max}};
}

/// Groups rows by (method, width, tol), in first-appearance order of methods
/// and ascending width and tolerance.
inline nlohmann::ordered_json summarize_rows(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw ParameterError("report needs at least one result row");
  std::vector<std::string> methods;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  std::map<std::tuple<std::size_t, int, int>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    const std::size_t m = std::size_t(std::find(methods.begin(), methods.end(), r.method) - methods.begin());
    groups[{m, r.width, r.tol}].push_back(&r);
  }
  nlohmann::ordered_json out;
  out["groups"] = nlohmann::ordered_json::array();
  for (const auto& [key, members] : groups) {
    std::vector<double> p, rc, f;
    for (const auto* r : members) {
      p.push_back(r->metrics.precision);
      rc.push_back(r->metrics.recall);
      f.push_back(r->metrics.f1);
    }
    nlohmann::ordered_json g;
    g["method"] = methods[std::get<0>(key)];
    g["width"] = std::get<1>(key);
    g["tol"] = std::get<2>(key);
    g["n"] = members.size();
    g["precision"] = summary_json(summarize(p));
    g["recall"] = summary_json(summarize(rc));
    g["f1"] = summary_json(summarize(f));
    out["groups"].push_back(g);
  }
  return out;
}

}  // namespace crackseg

#endif  // CRACKSEG_REPORT_HPP
