#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "evacast/csv.hpp"
#include "evacast/graph.hpp"
#include "evacast/timeutil.hpp"

namespace evacast {

inline constexpr double kMaxVphpl = 2500.0;  // plausibility ceiling per lane

struct DetectorRecord {
  EpochHour hour = 0;
  std::optional<double> volume;     // vehicles/hour
  std::optional<double> speed;      // mph
  std::optional<double> occupancy;  // fraction
};

// One detector's hourly series over a contiguous hour range. A record is
// present for every hour in the range; absent measurements are nullopt.
struct RawDetectorSeries {
  std::string detector_id;
  std::vector<DetectorRecord> records;

  bool record_missing(std::size_t i) const {
    return !records[i].volume.has_value() || !records[i].speed.has_value();
  }
};

inline void validate_series(const RawDetectorSeries& s) {
  for (std::size_t i = 0; i + 1 < s.records.size(); ++i)
    if (s.records[i + 1].hour != s.records[i].hour + 1)
      throw std::invalid_argument("series " + s.detector_id + ": hours not contiguous at " +
                                  format_timestamp(s.records[i].hour));
  for (const DetectorRecord& r : s.records) {
    if (r.volume && *r.volume < 0.0)
      throw std::invalid_argument("series " + s.detector_id + ": negative volume");
    if (r.speed && *r.speed < 0.0)
      throw std::invalid_argument("series " + s.detector_id + ": negative speed");
  }
}

// --- CSV ingestion ---------------------------------------------------------
// Columns: detector_id,timestamp,volume,speed,occupancy. Empty field means
// missing; hours absent from the file within a detector's observed span are
// treated as fully missing records.

inline std::vector<RawDetectorSeries> read_detector_series_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_id = t.require_column("detector_id");
  const int c_ts = t.require_column("timestamp");
  const int c_vol = t.require_column("volume");
  const int c_spd = t.require_column("speed");
  const int c_occ = t.require_column("occupancy");

  std::map<std::string, std::map<EpochHour, DetectorRecord>> grouped;
  for (const auto& r : t.rows) {
    DetectorRecord rec;
    rec.hour = parse_timestamp(r[c_ts]);
    if (!r[c_vol].empty()) rec.volume = parse_double(r[c_vol]);
    if (!r[c_spd].empty()) rec.speed = parse_double(r[c_spd]);
    if (!r[c_occ].empty()) rec.occupancy = parse_double(r[c_occ]);
    auto& series = grouped[r[c_id]];
    if (!series.emplace(rec.hour, rec).second)
      throw std::invalid_argument("duplicate record for " + r[c_id] + " at " + r[c_ts]);
  }

  std::vector<RawDetectorSeries> out;
  for (auto& [id, by_hour] : grouped) {
    RawDetectorSeries s;
    s.detector_id = id;
    const EpochHour first = by_hour.begin()->first;
    const EpochHour last = by_hour.rbegin()->first;
    for (EpochHour h = first; h <= last; ++h) {
      const auto it = by_hour.find(h);
      s.records.push_back(it != by_hour.end() ? it->second : DetectorRecord{h, {}, {}, {}});
    }
    validate_series(s);
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_detector_series_csv(const std::string& path,
                                      const std::vector<RawDetectorSeries>& series) {
  CsvWriter w(path);
  w.row({"detector_id", "timestamp", "volume", "speed", "occupancy"});
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const RawDetectorSeries& s : series)
    for (const DetectorRecord& r : s.records)
      w.row({s.detector_id, format_timestamp(r.hour), opt(r.volume), opt(r.speed),
             opt(r.occupancy)});
}

// --- quality control --------------------------------------------------------

struct Rejection {
  std::string detector_id;
  std::string rule;  // "missing>20%", "zeros>40%", "vphpl>2500"
  double value = 0.0;
};

struct QcResult {
  std::vector<RawDetectorSeries> retained;
  std::vector<Rejection> rejections;

  nlohmann::json report_json() const {
    nlohmann::json rej = nlohmann::json::array();
    for (const Rejection& r : rejections)
      rej.push_back({{"detector_id", r.detector_id}, {"rule", r.rule}, {"value", r.value}});
    nlohmann::json kept = nlohmann::json::array();
    for (const RawDetectorSeries& s : retained) kept.push_back(s.detector_id);
    return {{"retained", kept}, {"rejected", rej}};
  }
};

// Drops series with more than 20% missing records, more than 40% zero-volume
// records, or any record above 2500 vehicles/hour/lane. Rules are evaluated
// in that order and the first violation is reported.
inline QcResult qc_filter(const std::vector<RawDetectorSeries>& series, const RoadGraph& graph) {
  QcResult out;
  for (const RawDetectorSeries& s : series) {
    validate_series(s);
    const double n = static_cast<double>(s.records.size());
    if (n == 0.0) {
      out.rejections.push_back({s.detector_id, "missing>20%", 1.0});
      continue;
    }
    std::size_t missing = 0, zeros = 0;
    double worst_vphpl = 0.0;
    const int lanes = graph.node(graph.index_of(s.detector_id)).lane_count;
    for (std::size_t i = 0; i < s.records.size(); ++i) {
      if (s.record_missing(i)) ++missing;
      if (s.records[i].volume && *s.records[i].volume == 0.0) ++zeros;
      if (s.records[i].volume)
        worst_vphpl = std::max(worst_vphpl, *s.records[i].volume / lanes);
    }
    const double missing_frac = missing / n;
    const double zero_frac = zeros / n;
    if (missing_frac > 0.20) {
      out.rejections.push_back({s.detector_id, "missing>20%", missing_frac});
    } else if (zero_frac > 0.40) {
      out.rejections.push_back({s.detector_id, "zeros>40%", zero_frac});
    } else if (worst_vphpl > kMaxVphpl) {
      out.rejections.push_back({s.detector_id, "vphpl>2500", worst_vphpl});
    } else {
      out.retained.push_back(s);
    }
  }
  return out;
}

// --- imputation --------------------------------------------------------------

struct ImputeOptions {
  std::size_t neighbor_count = 5;   // regressors per detector
  double ridge = 1e-3;
  std::size_t max_iterations = 10;
  double tolerance = 1e-3;          // max relative change between sweeps
};

struct ImputeReport {
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<EpochHour> fallback_hours;  // hours missing at every detector
};

namespace imputedetail {

// Solves (X^T X + ridge I) beta = X^T y for a small dense system.
inline std::vector<double> ridge_solve(const std::vector<std::vector<double>>& rows,
                                       const std::vector<double>& y, double ridge) {
  const std::size_t p = rows.empty() ? 0 : rows[0].size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    a[i][i] = ridge;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += rows[r][i] * rows[r][j];
      a[i][p] += rows[r][i] * y[r];
    }
  }
  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    if (std::fabs(a[col][col]) < 1e-300) continue;  // degenerate, leave coefficient at zero
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t j = col; j <= p; ++j) a[r][j] -= f * a[col][j];
    }
  }
  std::vector<double> beta(p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    if (std::fabs(a[i][i]) >= 1e-300) beta[i] = a[i][p] / a[i][i];
  return beta;
}

inline double hour_of_day_mean(const RawDetectorSeries& s, int hod, double fallback) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const DetectorRecord& r : s.records) {
    if (r.volume && hour_of_day(r.hour) == hod) {
      sum += *r.volume;
      ++count;
    }
  }
  return count ? sum / count : fallback;
}

// Fills gaps by linear interpolation in time, extending flat at the ends.
inline void interpolate_gaps(std::vector<std::optional<double>>& v, double lo, double hi) {
  const std::size_t n = v.size();
  std::vector<std::size_t> obs;
  for (std::size_t i = 0; i < n; ++i)
    if (v[i]) obs.push_back(i);
  if (obs.empty()) return;  // nothing observed, caller handles
  std::vector<double> out(n, 0.0);
  for (const std::size_t i : obs) out[i] = *v[i];
  for (std::size_t k = 0; k + 1 < obs.size(); ++k) {
    const std::size_t a = obs[k], b = obs[k + 1];
    for (std::size_t j = a + 1; j < b; ++j) {
      const double t = static_cast<double>(j - a) / static_cast<double>(b - a);
      out[j] = out[a] + t * (out[b] - out[a]);
    }
  }
  for (std::size_t j = 0; j < obs.front(); ++j) out[j] = out[obs.front()];
  for (std::size_t j = obs.back() + 1; j < n; ++j) out[j] = out[obs.back()];
  for (std::size_t i = 0; i < n; ++i)
    if (!v[i]) v[i] = std::clamp(out[i], lo, hi);
}

}  // namespace imputedetail

// Fills every missing value. Volumes use round-robin iterative regression:
// each detector's missing hours are regressed (ridge least squares) on its
// nearest neighbors in the graph, sweeping until the imputed values settle
// or the iteration budget runs out. Speeds and occupancy are interpolated in
// time within each series. Observed values are never altered; imputed
// volumes are clamped to [0, 2500 * lanes].
inline ImputeReport impute(std::vector<RawDetectorSeries>& series, const RoadGraph& graph,
                           const ImputeOptions& opt = {}) {
  ImputeReport report;
  if (series.empty()) {
    report.converged = true;
    return report;
  }
  const std::size_t hours = series[0].records.size();
  const EpochHour start = series[0].records.empty() ? 0 : series[0].records[0].hour;
  for (const RawDetectorSeries& s : series) {
    validate_series(s);
    if (s.records.size() != hours || (hours && s.records[0].hour != start))
      throw std::invalid_argument("impute: series must share one hour range (" + s.detector_id +
                                  " differs)");
  }

  const std::size_t n = series.size();
  std::vector<double> caps(n), overall_mean(n, 0.0);
  std::vector<std::vector<bool>> missing(n, std::vector<bool>(hours, false));
  std::vector<std::vector<double>> vol(n, std::vector<double>(hours, 0.0));

  for (std::size_t d = 0; d < n; ++d) {
    caps[d] = kMaxVphpl * graph.node(graph.index_of(series[d].detector_id)).lane_count;
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t h = 0; h < hours; ++h) {
      if (series[d].records[h].volume) {
        vol[d][h] = *series[d].records[h].volume;
        sum += vol[d][h];
        ++cnt;
      } else {
        missing[d][h] = true;
      }
    }
    if (cnt == 0)
      throw std::invalid_argument("impute: series " + series[d].detector_id +
                                  " has no observed volumes");
    overall_mean[d] = sum / cnt;
  }

  // Hours missing everywhere cannot be regressed; pin them to each
  // detector's hour-of-day mean and report.
  std::vector<std::vector<bool>> pinned(n, std::vector<bool>(hours, false));
  for (std::size_t h = 0; h < hours; ++h) {
    bool all_missing = true;
    for (std::size_t d = 0; d < n && all_missing; ++d) all_missing = missing[d][h];
    if (!all_missing) continue;
    report.fallback_hours.push_back(start + static_cast<EpochHour>(h));
    for (std::size_t d = 0; d < n; ++d) pinned[d][h] = true;
  }

  // Initial fill: hour-of-day mean.
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t h = 0; h < hours; ++h)
      if (missing[d][h])
        vol[d][h] = imputedetail::hour_of_day_mean(
            series[d], hour_of_day(series[d].records[h].hour), overall_mean[d]);

  // Neighbor lists by hop distance, ties broken by node order.
  const auto hops = graph.hop_distances();
  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<std::size_t> graph_index(n);
  for (std::size_t d = 0; d < n; ++d) graph_index[d] = graph.index_of(series[d].detector_id);
  for (std::size_t d = 0; d < n; ++d) {
    std::vector<std::size_t> order;
    for (std::size_t e = 0; e < n; ++e)
      if (e != d) order.push_back(e);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return hops[graph_index[d]][graph_index[a]] < hops[graph_index[d]][graph_index[b]];
    });
    order.resize(std::min(opt.neighbor_count, order.size()));
    neighbors[d] = std::move(order);
  }

  for (std::size_t iter = 1; iter <= opt.max_iterations; ++iter) {
    double max_change = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      bool any = false;
      for (std::size_t h = 0; h < hours && !any; ++h) any = missing[d][h] && !pinned[d][h];
      if (!any || neighbors[d].empty()) continue;

      std::vector<std::vector<double>> design;
      std::vector<double> target;
      for (std::size_t h = 0; h < hours; ++h) {
        if (missing[d][h]) continue;
        std::vector<double> row{1.0};
        for (const std::size_t e : neighbors[d]) row.push_back(vol[e][h]);
        design.push_back(std::move(row));
        target.push_back(vol[d][h]);
      }
      if (design.empty()) continue;
      const std::vector<double> beta = imputedetail::ridge_solve(design, target, opt.ridge);
      for (std::size_t h = 0; h < hours; ++h) {
        if (!missing[d][h] || pinned[d][h]) continue;
        double pred = beta[0];
        for (std::size_t j = 0; j < neighbors[d].size(); ++j)
          pred += beta[j + 1] * vol[neighbors[d][j]][h];
        pred = std::clamp(pred, 0.0, caps[d]);
        max_change = std::max(max_change,
                              std::fabs(pred - vol[d][h]) / std::max(1.0, std::fabs(vol[d][h])));
        vol[d][h] = pred;
      }
    }
    report.iterations = iter;
    if (max_change < opt.tolerance) {
      report.converged = true;
      break;
    }
  }

  // Write imputed volumes back, then fill speed and occupancy by
  // interpolation within each series.
  for (std::size_t d = 0; d < n; ++d) {
    std::vector<std::optional<double>> spd(hours), occ(hours);
    for (std::size_t h = 0; h < hours; ++h) {
      if (missing[d][h] || !series[d].records[h].volume)
        series[d].records[h].volume = vol[d][h];
      spd[h] = series[d].records[h].speed;
      occ[h] = series[d].records[h].occupancy;
    }
    imputedetail::interpolate_gaps(spd, 0.0, 120.0);
    imputedetail::interpolate_gaps(occ, 0.0, 1.0);
    for (std::size_t h = 0; h < hours; ++h) {
      if (!series[d].records[h].speed) series[d].records[h].speed = spd[h] ? *spd[h] : 0.0;
      if (!series[d].records[h].occupancy)
        series[d].records[h].occupancy = occ[h] ? *occ[h] : 0.0;
    }
  }
  return report;
}

}  // namespace evacast
