#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "mlfst/error.hpp"
#include "mlfst/log.hpp"

namespace mlfst {

enum class Schema { dataset1, dataset2 };
enum class CoordMode { geodetic, local };

inline const char* schema_name(Schema s) { return s == Schema::dataset1 ? "dataset1" : "dataset2"; }
inline const char* coord_mode_name(CoordMode m) {
  return m == CoordMode::geodetic ? "geodetic" : "local";
}

// One synchronized telemetry sample. position_x/position_y are longitude/latitude
// in degrees in geodetic mode, or local east/north meters in local mode;
// position_z is altitude in meters in both.
struct FlightRecord {
  double timestamp = 0.0;
  double wind_speed = 0.0;
  double wind_angle = 0.0;
  double battery_voltage = 0.0;
  double battery_current = 0.0;
  double position_x = 0.0;
  double position_y = 0.0;
  double position_z = 0.0;
  double orientation_x = 0.0;
  double orientation_y = 0.0;
  double orientation_z = 0.0;
  double orientation_w = 1.0;
  double velocity_x = 0.0;
  double velocity_y = 0.0;
  double velocity_z = 0.0;
  double angular_x = 0.0;
  double angular_y = 0.0;
  double angular_z = 0.0;
  double linear_acceleration_x = 0.0;
  double linear_acceleration_y = 0.0;
  double linear_acceleration_z = 0.0;
  double payload = 0.0;
};

inline constexpr int kFeatureCount = 21;

// Column order of the delimited interchange format. Model features are the same
// list minus the leading timestamp.
inline const std::array<std::string, 22>& csv_columns() {
  static const std::array<std::string, 22> cols = {
      "timestamp",
      "wind_speed",
      "wind_angle",
      "battery_voltage",
      "battery_current",
      "position_x",
      "position_y",
      "position_z",
      "orientation_x",
      "orientation_y",
      "orientation_z",
      "orientation_w",
      "velocity_x",
      "velocity_y",
      "velocity_z",
      "angular_x",
      "angular_y",
      "angular_z",
      "linear_acceleration_x",
      "linear_acceleration_y",
      "linear_acceleration_z",
      "payload",
  };
  return cols;
}

inline const std::string kLabelColumn = "label";

inline std::vector<std::string> feature_names() {
  const auto& cols = csv_columns();
  return std::vector<std::string>(cols.begin() + 1, cols.end());
}

// Feature indices of position_x/position_y/position_z within feature_names().
inline constexpr std::array<int, 3> kPositionFeatureIdx = {4, 5, 6};

inline double* record_field(FlightRecord& r, int csv_col) {
  double* fields[22] = {
      &r.timestamp,     &r.wind_speed,      &r.wind_angle,    &r.battery_voltage,
      &r.battery_current, &r.position_x,    &r.position_y,    &r.position_z,
      &r.orientation_x, &r.orientation_y,   &r.orientation_z, &r.orientation_w,
      &r.velocity_x,    &r.velocity_y,      &r.velocity_z,    &r.angular_x,
      &r.angular_y,     &r.angular_z,       &r.linear_acceleration_x,
      &r.linear_acceleration_y, &r.linear_acceleration_z, &r.payload,
  };
  return fields[csv_col];
}

inline double record_field(const FlightRecord& r, int csv_col) {
  return *record_field(const_cast<FlightRecord&>(r), csv_col);
}

inline std::array<double, kFeatureCount> record_features(const FlightRecord& r) {
  std::array<double, kFeatureCount> f{};
  for (int c = 1; c < 22; ++c) f[c - 1] = record_field(r, c);
  return f;
}

struct RejectedRow {
  std::size_t line_no = 0;  // 1-based line in the source file
  std::string reason;
};

struct FlightSeries {
  std::string flight_id;
  std::vector<FlightRecord> records;
  double sample_rate_hz = 10.0;
  // Per-record state labels (dataset2 only); empty when unlabeled.
  std::vector<int> labels;

  std::size_t size() const { return records.size(); }
  bool has_labels() const { return !labels.empty(); }
};

struct ParseResult {
  FlightSeries series;
  std::vector<RejectedRow> rejected;
};

// Optional canonical -> actual header renaming for files whose column naming
// differs from the interchange defaults.
struct ColumnMap {
  std::map<std::string, std::string> rename;

  std::string actual(const std::string& canonical) const {
    auto it = rename.find(canonical);
    return it == rename.end() ? canonical : it->second;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.emplace_back(trim(std::string_view(line).substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

// Per-record invariant check shared by the parser and the validator.
// Returns a reason string when the record must be flagged.
inline std::optional<std::string> record_invariant_violation(const FlightRecord& r,
                                                             CoordMode coord) {
  const double qn = std::sqrt(r.orientation_x * r.orientation_x +
                              r.orientation_y * r.orientation_y +
                              r.orientation_z * r.orientation_z +
                              r.orientation_w * r.orientation_w);
  if (std::isfinite(qn) && (qn < 0.95 || qn > 1.05)) {
    return "quaternion norm " + std::to_string(qn) + " outside 1 +/- 0.05";
  }
  if (coord == CoordMode::geodetic) {
    if (std::abs(r.position_y) > 90.0) {
      return "latitude " + std::to_string(r.position_y) + " outside [-90, 90]";
    }
    if (std::abs(r.position_x) > 180.0) {
      return "longitude " + std::to_string(r.position_x) + " outside [-180, 180]";
    }
  }
  if (r.payload < 0.0) return "negative payload";
  return std::nullopt;
}

// Parses one flight from a delimited text table. Rows violating record
// invariants (or breaking timestamp monotonicity) are collected into the
// rejection list, not silently dropped or repaired. Timestamps are re-based so
// the first accepted record starts at 0.
inline ParseResult parse_flight_csv(std::istream& in, Schema schema, const ColumnMap& colmap = {},
                                    const std::string& flight_id = "",
                                    CoordMode coord = CoordMode::geodetic) {
  std::string line;
  if (!std::getline(in, line)) raise(Errc::empty_file, "no header row");

  const auto header = detail::split_csv_line(line);
  std::map<std::string, int> header_idx;
  for (std::size_t i = 0; i < header.size(); ++i) header_idx[header[i]] = static_cast<int>(i);

  std::array<int, 22> col_idx{};
  for (int c = 0; c < 22; ++c) {
    const std::string actual = colmap.actual(csv_columns()[c]);
    auto it = header_idx.find(actual);
    if (it == header_idx.end()) raise(Errc::missing_column, actual);
    col_idx[c] = it->second;
  }
  int label_idx = -1;
  if (schema == Schema::dataset2) {
    auto it = header_idx.find(colmap.actual(kLabelColumn));
    if (it != header_idx.end()) label_idx = it->second;
  }

  ParseResult out;
  out.series.flight_id = flight_id;
  std::vector<double> raw_timestamps;
  std::size_t line_no = 1;
  std::size_t data_rows = 0;
  std::size_t unparseable = 0;
  std::size_t first_bad_line = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++data_rows;
    const auto cells = detail::split_csv_line(line);

    FlightRecord rec;
    bool ok = true;
    for (int c = 0; c < 22 && ok; ++c) {
      if (col_idx[c] >= static_cast<int>(cells.size()) ||
          !detail::parse_double(cells[col_idx[c]], *record_field(rec, c))) {
        ok = false;
      }
    }
    int label = -1;
    if (ok && label_idx >= 0) {
      double lv = 0.0;
      if (label_idx >= static_cast<int>(cells.size()) ||
          !detail::parse_double(cells[label_idx], lv) || lv != std::floor(lv) || lv < 0 ||
          lv > 4) {
        out.rejected.push_back({line_no, "label not an integer in [0, 4]"});
        continue;
      }
      label = static_cast<int>(lv);
    }
    if (!ok) {
      ++unparseable;
      if (first_bad_line == 0) first_bad_line = line_no;
      out.rejected.push_back({line_no, "unparseable numeric field"});
      continue;
    }

    if (auto why = record_invariant_violation(rec, coord)) {
      out.rejected.push_back({line_no, *why});
      continue;
    }
    if (!raw_timestamps.empty() && !(rec.timestamp > raw_timestamps.back())) {
      out.rejected.push_back({line_no, "timestamp not strictly increasing"});
      continue;
    }
    raw_timestamps.push_back(rec.timestamp);
    out.series.records.push_back(rec);
    if (label_idx >= 0) out.series.labels.push_back(label);
  }

  if (data_rows == 0) raise(Errc::empty_file, "no data rows");
  if (unparseable * 10 > data_rows) {
    raise(Errc::unparseable_row,
          "line " + std::to_string(first_bad_line) + " (" + std::to_string(unparseable) + "/" +
              std::to_string(data_rows) + " rows failed to parse)");
  }
  if (out.series.records.empty()) {
    raise(Errc::empty_file, "every row was rejected");
  }

  const double t0 = out.series.records.front().timestamp;
  for (auto& r : out.series.records) r.timestamp -= t0;

  // Infer the sample rate from the median step when it looks sane.
  if (out.series.records.size() >= 2) {
    std::vector<double> steps;
    steps.reserve(out.series.records.size() - 1);
    for (std::size_t i = 1; i < out.series.records.size(); ++i) {
      steps.push_back(out.series.records[i].timestamp - out.series.records[i - 1].timestamp);
    }
    std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
    const double med = steps[steps.size() / 2];
    if (med > 1e-6 && med < 10.0) out.series.sample_rate_hz = 1.0 / med;
  }
  return out;
}

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace detail

// Writes a series back to the interchange format (exact round-trip precision).
inline void write_flight_csv(std::ostream& os, const FlightSeries& s, Schema schema,
                             const std::vector<int>* labels = nullptr) {
  if (schema == Schema::dataset2 && labels == nullptr && s.has_labels()) labels = &s.labels;
  if (schema == Schema::dataset2) {
    require(labels != nullptr && labels->size() == s.records.size(), Errc::shape_mismatch,
            "dataset2 write requires one label per record");
  }
  std::string line;
  for (int c = 0; c < 22; ++c) {
    if (c) line += ',';
    line += csv_columns()[c];
  }
  if (schema == Schema::dataset2) line += ',' + kLabelColumn;
  os << line << '\n';
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    line.clear();
    for (int c = 0; c < 22; ++c) {
      if (c) line += ',';
      detail::append_double(line, record_field(s.records[i], c));
    }
    if (schema == Schema::dataset2) {
      line += ',';
      line += std::to_string((*labels)[i]);
    }
    os << line << '\n';
  }
  if (!os) raise(Errc::io_failure, "write failed");
}

struct ValidationIssue {
  enum class Kind { gap, invariant, non_finite };
  Kind kind;
  std::size_t row = 0;  // record index within the series
  std::string channel;  // non_finite only
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> gaps;
  std::vector<ValidationIssue> invariant_violations;
  std::vector<ValidationIssue> non_finite;

  bool empty() const {
    return gaps.empty() && invariant_violations.empty() && non_finite.empty();
  }
  std::size_t total() const {
    return gaps.size() + invariant_violations.size() + non_finite.size();
  }
};

// Read-only diagnostic sweep: timestamp gaps (> 2x nominal step), record
// invariant violations, and NaN/inf occurrences per channel.
inline ValidationReport validate_series(const FlightSeries& s,
                                        CoordMode coord = CoordMode::geodetic) {
  ValidationReport rep;
  const double nominal = 1.0 / s.sample_rate_hz;
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& r = s.records[i];
    if (i > 0) {
      const double step = r.timestamp - s.records[i - 1].timestamp;
      if (step > 2.0 * nominal) {
        rep.gaps.push_back({ValidationIssue::Kind::gap, i, "timestamp",
                            "step " + std::to_string(step) + " s"});
      }
    }
    for (int c = 0; c < 22; ++c) {
      const double v = record_field(r, c);
      if (!std::isfinite(v)) {
        rep.non_finite.push_back({ValidationIssue::Kind::non_finite, i, csv_columns()[c],
                                  std::isnan(v) ? "NaN" : "inf"});
      }
    }
    if (auto why = record_invariant_violation(r, coord)) {
      rep.invariant_violations.push_back({ValidationIssue::Kind::invariant, i, "", *why});
    }
  }
  return rep;
}

}  // namespace mlfst
