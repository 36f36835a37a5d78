#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mlfst/error.hpp"
#include "mlfst/labeler.hpp"
#include "mlfst/log.hpp"
#include "mlfst/model.hpp"
#include "mlfst/optim.hpp"
#include "mlfst/pipeline.hpp"
#include "mlfst/telemetry.hpp"

namespace mlfst {

// Aggregated run settings, loadable from one JSON file; command-line flags
// override individual fields. Defaults follow the reference configuration
// (WS = HS = 30, lr = 1e-4, batch 64, 100 epochs, 256/128 units).
struct RunConfig {
  std::string data_dir;
  std::string checkpoint = "model.mlfs";
  std::string report_dir = "reports";
  Schema schema = Schema::dataset2;
  CoordMode coord = CoordMode::geodetic;
  std::string precision = "f32";  // "f32" or "f64"
  int ws = 30;
  int hs = 30;
  ColumnMap columns;  // canonical -> actual header renames for ingestion
  LabelThresholds thresholds;
  SplitSpec split;
  TrainConfig train;
  ArchConfig arch;
};

inline void validate_run_config(const RunConfig& c) {
  require(c.ws >= 1 && c.hs >= 1, Errc::config_invalid, "WS and HS must be >= 1");
  require(c.precision == "f32" || c.precision == "f64", Errc::config_invalid,
          "precision must be 'f32' or 'f64'");
  require(c.thresholds.eps_xy > 0 && c.thresholds.eps_z > 0 && c.thresholds.eps_yaw > 0,
          Errc::config_invalid, "label thresholds must be strictly positive");
  validate_train_config(c.train);
  ArchConfig a = c.arch;
  a.ws = c.ws;
  a.hs = c.hs;
  validate_arch(a);
}

namespace detail {

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::config_invalid, std::string("config field '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

// JSON object of canonical -> actual header names, e.g. {"timestamp": "time_s"}.
inline ColumnMap parse_column_map(const nlohmann::json& j) {
  require(j.is_object(), Errc::config_invalid, "'columns' must be an object of header renames");
  ColumnMap map;
  for (const auto& [canonical, actual] : j.items()) {
    require(actual.is_string(), Errc::config_invalid,
            "column rename '" + canonical + "' must map to a string");
    map.rename[canonical] = actual.template get<std::string>();
  }
  return map;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::get_if(j, "data_dir", c.data_dir);
  detail::get_if(j, "checkpoint", c.checkpoint);
  detail::get_if(j, "report_dir", c.report_dir);
  std::string schema = "dataset2", coord = "geodetic";
  detail::get_if(j, "schema", schema);
  detail::get_if(j, "coord_mode", coord);
  require(schema == "dataset1" || schema == "dataset2", Errc::config_invalid,
          "schema must be 'dataset1' or 'dataset2'");
  require(coord == "geodetic" || coord == "local", Errc::config_invalid,
          "coord_mode must be 'geodetic' or 'local'");
  c.schema = schema == "dataset1" ? Schema::dataset1 : Schema::dataset2;
  c.coord = coord == "geodetic" ? CoordMode::geodetic : CoordMode::local;
  detail::get_if(j, "precision", c.precision);
  detail::get_if(j, "ws", c.ws);
  detail::get_if(j, "hs", c.hs);
  if (j.contains("columns")) c.columns = parse_column_map(j.at("columns"));

  if (j.contains("thresholds")) {
    const auto& t = j.at("thresholds");
    detail::get_if(t, "eps_xy", c.thresholds.eps_xy);
    detail::get_if(t, "eps_z", c.thresholds.eps_z);
    detail::get_if(t, "eps_yaw", c.thresholds.eps_yaw);
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::get_if(s, "train", c.split.train_frac);
    detail::get_if(s, "val", c.split.val_frac);
    detail::get_if(s, "test", c.split.test_frac);
    std::string mode = "by_flight";
    detail::get_if(s, "mode", mode);
    require(mode == "by_flight" || mode == "by_window", Errc::config_invalid,
            "split.mode must be 'by_flight' or 'by_window'");
    c.split.mode = mode == "by_flight" ? SplitMode::by_flight : SplitMode::by_window;
    detail::get_if(s, "seed", c.split.seed);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::get_if(t, "learning_rate", c.train.learning_rate);
    detail::get_if(t, "batch_size", c.train.batch_size);
    detail::get_if(t, "max_epochs", c.train.max_epochs);
    detail::get_if(t, "patience", c.train.early_stop_patience);
    detail::get_if(t, "min_delta", c.train.min_delta);
    detail::get_if(t, "w_traj", c.train.loss_weights.w_traj);
    detail::get_if(t, "w_cls", c.train.loss_weights.w_cls);
    detail::get_if(t, "seed", c.train.seed);
    detail::get_if(t, "shuffle", c.train.shuffle);
  }
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    detail::get_if(a, "shared_units", c.arch.shared_units);
    detail::get_if(a, "second_units", c.arch.second_units);
    detail::get_if(a, "cls_dense_units", c.arch.cls_dense_units);
    detail::get_if(a, "traj_td_units", c.arch.traj_td_units);
    std::string mode = lstm_mode_name(c.arch.lstm_output_mode);
    detail::get_if(a, "lstm_output_mode", mode);
    c.arch.lstm_output_mode = lstm_mode_from_name(mode);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(Errc::io_failure, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::config_invalid, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

}  // namespace mlfst
