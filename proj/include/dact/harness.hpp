// Copyright 2026 The dact-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file harness.hpp
 * @brief Trade-off curves, AUC, seed confidence bands and the CSV schemas.
 *
 *     tradeoff.csv   method,knob,seed,efficiency,performance
 *     curve.csv      method,knob,seeds,efficiency_mean,efficiency_ci95,performance_mean,performance_ci95
 *     auc.csv        method,auc,efficiency_min,efficiency_max
 *     histogram.csv  block,count
 *
 * Reals are printed with 9 significant digits ("%.9g"); rows are emitted in a
 * fixed order so identical inputs give identical files.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dact/data.hpp"
#include "dact/evaluation.hpp"

namespace dact {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Seed-aggregated point for one knob value.
struct BandPoint {
  double knob = 0.0;
  std::size_t seeds = 0;
  double efficiency_mean = 0.0;
  double efficiency_ci95 = 0.0;  // 1.96 * standard error
  double performance_mean = 0.0;
  double performance_ci95 = 0.0;
};

struct CurveSummary {
  Method method = Method::dact;
  std::vector<BandPoint> band;  // sorted by efficiency_mean
  std::optional<double> auc;    // undefined with fewer than two distinct points
  double efficiency_min = 0.0;
  double efficiency_max = 0.0;
};

/// Mean and 1.96 * sample standard error; identical samples have exactly zero width.
inline std::pair<double, double> mean_ci95(std::span<const double> xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) return {xs.front(), 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(xs.size()))};
}

/// Sample standard deviation (n - 1); zero for fewer than two samples.
inline double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2 || std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Trapezoid rule over (x, y) pairs sorted by x; nullopt for fewer than two points.
inline std::optional<double> trapezoid_auc(std::span<const std::pair<double, double>> xy) {
  if (xy.size() < 2) return std::nullopt;
  double area = 0.0;
  for (std::size_t i = 1; i < xy.size(); ++i) {
    area += (xy[i].first - xy[i - 1].first) * (xy[i].second + xy[i - 1].second) / 2.0;
  }
  return area;
}

/// Groups points by method and knob, averages over seeds, sorts by efficiency
/// and integrates performance over each method's own efficiency range.
inline std::vector<CurveSummary> curve(std::span<const TradeoffPoint> points) {
  std::map<Method, std::map<double, std::vector<const TradeoffPoint*>>> grouped;
  for (const auto& p : points) {
    if (std::isfinite(p.efficiency) && std::isfinite(p.performance)) grouped[p.method][p.knob].push_back(&p);
  }
  std::vector<CurveSummary> out;
  for (const auto& [method, by_knob] : grouped) {
    CurveSummary s;
    s.method = method;
    for (const auto& [knob, samples] : by_knob) {
      std::vector<double> eff, perf;
      for (const auto* p : samples) {
        eff.push_back(p->efficiency);
        perf.push_back(p->performance);
      }
      BandPoint b;
      b.knob = knob;
      b.seeds = samples.size();
      std::tie(b.efficiency_mean, b.efficiency_ci95) = mean_ci95(eff);
      std::tie(b.performance_mean, b.performance_ci95) = mean_ci95(perf);
      s.band.push_back(b);
    }
    std::stable_sort(s.band.begin(), s.band.end(), [](const BandPoint& l, const BandPoint& r) {
      return l.efficiency_mean < r.efficiency_mean;
    });
    std::vector<std::pair<double, double>> xy;
    for (const auto& b : s.band) xy.emplace_back(b.efficiency_mean, b.performance_mean);
    s.auc = trapezoid_auc(xy);
    s.efficiency_min = s.band.front().efficiency_mean;
    s.efficiency_max = s.band.back().efficiency_mean;
    out.push_back(std::move(s));
  }
  return out;
}

/// Linear interpolation of mean performance at `efficiency`; nullopt outside the observed range.
inline std::optional<double> performance_at(const CurveSummary& s, double efficiency) {
  if (s.band.empty() || efficiency < s.efficiency_min || efficiency > s.efficiency_max) return std::nullopt;
  for (std::size_t i = 0; i < s.band.size(); ++i) {
    const auto& b = s.band[i];
    if (b.efficiency_mean == efficiency) return b.performance_mean;
    if (i > 0 && efficiency < b.efficiency_mean) {
      const auto& a = s.band[i - 1];
      const double t = (efficiency - a.efficiency_mean) / (b.efficiency_mean - a.efficiency_mean);
      return a.performance_mean + t * (b.performance_mean - a.performance_mean);
    }
  }
  return s.band.back().performance_mean;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_tradeoff_csv(std::ostream& out, std::span<const TradeoffPoint> points) {
  out << "method,knob,seed,efficiency,performance\n";
  for (const auto& p : points) {
    out << to_string(p.method) << ',' << format_real(p.knob) << ',' << p.seed << ',' << format_real(p.efficiency)
        << ',' << format_real(p.performance) << '\n';
  }
}

inline std::vector<TradeoffPoint> read_tradeoff_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,knob,seed,efficiency,performance", 0) != 0) {
    throw SchemaError(source + ": expected tradeoff.csv header");
  }
  std::vector<TradeoffPoint> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1) {
      f.push_back(line.substr(start, comma - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 5) throw DataError(source + ": line " + std::to_string(line_no) + ": expected 5 fields");
    try {
      TradeoffPoint p;
      p.method = parse_method(f[0]);
      p.knob = std::stod(f[1]);
      p.seed = std::stoull(f[2]);
      p.efficiency = std::stod(f[3]);
      p.performance = std::stod(f[4]);
      out.push_back(p);
    } catch (const std::exception& e) {
      throw DataError(source + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_curve_csv(std::ostream& out, std::span<const CurveSummary> curves) {
  out << "method,knob,seeds,efficiency_mean,efficiency_ci95,performance_mean,performance_ci95\n";
  for (const auto& c : curves)
    for (const auto& b : c.band) {
      out << to_string(c.method) << ',' << format_real(b.knob) << ',' << b.seeds << ','
          << format_real(b.efficiency_mean) << ',' << format_real(b.efficiency_ci95) << ','
          << format_real(b.performance_mean) << ',' << format_real(b.performance_ci95) << '\n';
    }
}

inline void write_auc_csv(std::ostream& out, std::span<const CurveSummary> curves) {
  out << "method,auc,efficiency_min,efficiency_max\n";
  for (const auto& c : curves) {
    out << to_string(c.method) << ',' << (c.auc ? format_real(*c.auc) : std::string("undefined")) << ','
        << format_real(c.efficiency_min) << ',' << format_real(c.efficiency_max) << '\n';
  }
}

inline void write_histogram_csv(std::ostream& out, const LayerHistogram& h) {
  out << "block,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) out << i + 1 << ',' << h.counts[i] << '\n';
}

}  // namespace dact
