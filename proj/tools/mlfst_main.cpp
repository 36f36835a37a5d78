// Command-line front end: synth, annotate, train, evaluate, predict.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlfst/mlfst.hpp"

namespace fs = std::filesystem;
using namespace mlfst;

namespace {

Schema schema_from(const std::string& s) {
  if (s == "dataset1") return Schema::dataset1;
  if (s == "dataset2") return Schema::dataset2;
  raise(Errc::config_invalid, "schema must be 'dataset1' or 'dataset2'");
}

CoordMode coord_from(const std::string& s) {
  if (s == "geodetic") return CoordMode::geodetic;
  if (s == "local") return CoordMode::local;
  raise(Errc::config_invalid, "coord mode must be 'geodetic' or 'local'");
}

std::vector<fs::path> list_csvs(const std::string& dir) {
  if (!fs::is_directory(dir)) raise(Errc::io_failure, "'" + dir + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) raise(Errc::no_usable_flights, "no .csv files in '" + dir + "'");
  return out;
}

// Loads a canonical -> actual header rename table from a JSON file.
ColumnMap columns_from_file(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream is(path);
  if (!is) raise(Errc::io_failure, "cannot open columns file '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::config_invalid, std::string("columns file is not valid JSON: ") + e.what());
  }
  return parse_column_map(j);
}

// Reads every flight in a directory; files without a label column are
// annotated on the fly with the given thresholds.
std::vector<LabeledFlight> load_flights(const std::string& dir, Schema schema, CoordMode coord,
                                        const LabelThresholds& th, const ColumnMap& columns = {}) {
  std::vector<LabeledFlight> flights;
  for (const auto& path : list_csvs(dir)) {
    std::ifstream is(path);
    if (!is) raise(Errc::io_failure, "cannot open '" + path.string() + "'");
    ParseResult pr = parse_flight_csv(is, schema, columns, path.stem().string(), coord);
    if (!pr.rejected.empty())
      log_warn(path.stem().string() + ": rejected " + std::to_string(pr.rejected.size()) +
               " row(s)");
    LabeledFlight lf;
    lf.labels = pr.series.has_labels() ? pr.series.labels
                                       : annotate_states(pr.series, th, coord);
    lf.series = std::move(pr.series);
    flights.push_back(std::move(lf));
  }
  return flights;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) raise(Errc::io_failure, "cannot open '" + path + "' for writing");
  os << content;
  if (!os) raise(Errc::io_failure, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// annotate
// ---------------------------------------------------------------------------

struct AnnotateArgs {
  std::string input, output;
  std::string schema = "dataset1";
  std::string coord = "geodetic";
  std::string columns_file;
  LabelThresholds th;
};

int cmd_annotate(const AnnotateArgs& a) {
  std::ifstream is(a.input);
  if (!is) raise(Errc::io_failure, "cannot open '" + a.input + "'");
  ParseResult pr = parse_flight_csv(is, schema_from(a.schema), columns_from_file(a.columns_file),
                                    fs::path(a.input).stem().string(), coord_from(a.coord));
  for (const auto& r : pr.rejected)
    log_warn("line " + std::to_string(r.line_no) + " rejected: " + r.reason);

  const std::vector<int> labels = annotate_states(pr.series, a.th, coord_from(a.coord));
  std::ofstream os(a.output);
  if (!os) raise(Errc::io_failure, "cannot open '" + a.output + "' for writing");
  write_flight_csv(os, pr.series, Schema::dataset2, &labels);
  std::cout << "annotated " << pr.series.size() << " records -> " << a.output << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  int count = 1;
  std::string pattern = "mixed";  // or a specific pattern name
  double duration_s = 120.0;
  double altitude_m = 30.0;
  double speed_mps = 5.0;
  double payload_g = 250.0;
  double wind_mps = 3.0;
  double noise_scale = 1.0;
  double rate_hz = 10.0;
  std::uint64_t seed = 1;
  std::string coord = "geodetic";
};

int cmd_synth(const SynthArgs& a) {
  require(a.count >= 1, Errc::config_invalid, "count must be >= 1");
  fs::create_directories(a.out_dir);

  const FlightPattern cycle[4] = {FlightPattern::triangular, FlightPattern::square,
                                  FlightPattern::polygonal, FlightPattern::random_pattern};
  for (int i = 0; i < a.count; ++i) {
    SynthConfig cfg;
    cfg.pattern = a.pattern == "mixed" ? cycle[i % 4] : pattern_from_name(a.pattern);
    cfg.duration_s = a.duration_s;
    cfg.altitude_m = a.altitude_m;
    cfg.speed_mps = a.speed_mps;
    cfg.payload_g = a.payload_g;
    cfg.wind_mean_mps = a.wind_mps;
    cfg.noise_std = NoiseStd::light().scaled(a.noise_scale);
    cfg.sample_rate_hz = a.rate_hz;
    cfg.seed = a.seed + static_cast<std::uint64_t>(i);
    cfg.coord = coord_from(a.coord);

    const FlightSeries s = generate_synthetic_flight(cfg);
    char name[64];
    std::snprintf(name, sizeof(name), "flight_%03d.csv", i);
    std::ofstream os(fs::path(a.out_dir) / name);
    if (!os) raise(Errc::io_failure, std::string("cannot open '") + name + "' for writing");
    write_flight_csv(os, s, Schema::dataset1);
  }
  std::cout << "wrote " << a.count << " flight(s) to " << a.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

template <class S>
void run_training(const RunConfig& cfg, const std::vector<LabeledFlight>& flights) {
  WindowedDataset all = slide_windows(flights, cfg.ws, cfg.hs);
  SplitResult split = split_dataset(all, cfg.split);
  const ScalerParams scaler = fit_scaler(split.train);
  apply_scaler(split.train, scaler);
  apply_scaler(split.val, scaler);
  apply_scaler(split.test, scaler);

  ArchConfig arch = cfg.arch;
  arch.ws = cfg.ws;
  arch.hs = cfg.hs;
  arch.feature_count = all.feature_count;
  ModelParams<S> model = build_model<S>(arch, cfg.train.seed);

  fs::create_directories(cfg.report_dir);
  std::ofstream hist_os(fs::path(cfg.report_dir) / "history.jsonl");
  const TrainHistory hist = train(model, split.train, split.val, cfg.train, &hist_os);

  CheckpointMeta meta;
  meta.schema = cfg.schema;
  meta.coord = cfg.coord;
  meta.precision = cfg.precision;
  meta.loss_weights = cfg.train.loss_weights;
  meta.sample_rate_hz = flights[0].series.sample_rate_hz;
  save_checkpoint(model, scaler, meta, cfg.checkpoint);

  nlohmann::json sj;
  for (const auto& [flight, which] : split.flight_assignment)
    sj[flight] = which == 0 ? "train" : which == 1 ? "val" : "test";
  write_text_file((fs::path(cfg.report_dir) / "split.json").string(), sj.dump(2) + "\n");

  std::cout << "trained " << hist.epochs.size() << " epoch(s); best epoch " << hist.best_epoch
            << " val_total " << hist.best_val_total
            << (hist.stopped_early ? " (early stop)" : "") << "; checkpoint -> "
            << cfg.checkpoint << "\n";
}

int cmd_train(const RunConfig& cfg) {
  validate_run_config(cfg);
  require(!cfg.data_dir.empty(), Errc::config_invalid, "data_dir is required");
  const auto flights =
      load_flights(cfg.data_dir, cfg.schema, cfg.coord, cfg.thresholds, cfg.columns);
  if (cfg.precision == "f64")
    run_training<double>(cfg, flights);
  else
    run_training<float>(cfg, flights);
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate / predict (shared inference plumbing)
// ---------------------------------------------------------------------------

struct Inference {
  LoadedCheckpoint<double> ckpt;
  std::vector<std::array<double, kNumStates>> probs;  // per window
  Tensor3<double> traj_pred;                          // [N, HS, 3] original units
};

// Scales inputs with the checkpoint scaler, runs the model in inference mode,
// and inverse-transforms the trajectory head back to original units.
void run_inference(Inference& inf, const WindowedDataset& ds_scaled) {
  ModelParams<double>& model = inf.ckpt.model;
  const std::size_t n = ds_scaled.size();
  inf.traj_pred.resize(n, ds_scaled.hs, 3);
  inf.probs.resize(n);

  constexpr std::size_t kEvalBatch = 256;
  ModelCache<double> cache;
  std::size_t done = 0;
  while (done < n) {
    const std::size_t take = std::min(kEvalBatch, n - done);
    std::vector<std::size_t> idx(take);
    std::iota(idx.begin(), idx.end(), done);
    Batch<double> b = assemble_batch<double>(ds_scaled, idx);
    ModelOutput<double> out = model_forward(model, b.x, /*train=*/false, cache);
    for (std::size_t j = 0; j < take; ++j) {
      for (int c = 0; c < kNumStates; ++c)
        inf.probs[done + j][static_cast<std::size_t>(c)] = out.probs(c, static_cast<int>(j));
      for (int t = 0; t < ds_scaled.hs; ++t)
        for (int c = 0; c < 3; ++c)
          inf.traj_pred.at(done + j, t, c) = out.traj[static_cast<std::size_t>(t)](c, static_cast<int>(j));
    }
    done += take;
  }
  invert_traj_scaler(inf.traj_pred, inf.ckpt.scaler);
}

WindowedDataset window_for_checkpoint(const LoadedCheckpoint<double>& ckpt,
                                      const std::vector<LabeledFlight>& flights) {
  require(kFeatureCount == ckpt.model.arch.feature_count, Errc::checkpoint_mismatch,
          "checkpoint expects " + std::to_string(ckpt.model.arch.feature_count) +
              " features, data has " + std::to_string(kFeatureCount));
  return slide_windows(flights, ckpt.model.arch.ws, ckpt.model.arch.hs);
}

struct EvaluateArgs {
  std::string checkpoint, data_dir, report_dir = "reports";
  std::string split_file;      // optional: produced by train
  std::string split = "test";  // which subset of the split file to use
  std::string schema = "dataset2";
  std::string columns_file;
};

int cmd_evaluate(const EvaluateArgs& a) {
  Inference inf{load_checkpoint<double>(a.checkpoint), {}, {}};
  const CoordMode coord = inf.ckpt.meta.coord;

  auto flights = load_flights(a.data_dir, schema_from(a.schema), coord, LabelThresholds{},
                              columns_from_file(a.columns_file));
  if (!a.split_file.empty()) {
    std::ifstream sf(a.split_file);
    if (!sf) raise(Errc::io_failure, "cannot open split file '" + a.split_file + "'");
    nlohmann::json sj;
    sf >> sj;
    std::vector<LabeledFlight> kept;
    for (auto& fl : flights) {
      const auto it = sj.find(fl.series.flight_id);
      if (it != sj.end() && (a.split == "all" || it->get<std::string>() == a.split))
        kept.push_back(std::move(fl));
    }
    require(!kept.empty(), Errc::no_usable_flights,
            "no flights assigned to split '" + a.split + "'");
    flights = std::move(kept);
  }

  WindowedDataset ds = window_for_checkpoint(inf.ckpt, flights);
  const Tensor3<double> traj_true = ds.traj_targets;  // original units
  const auto truth = ds.state_targets;
  const auto dominant = ds.dominant_state;
  apply_scaler(ds, inf.ckpt.scaler);
  run_inference(inf, ds);

  const double rate = inf.ckpt.meta.sample_rate_hz;
  const TrajErrorTable tab = trajectory_errors(inf.traj_pred, traj_true, coord, rate);
  const ClassificationReport cls = confusion_and_metrics(inf.probs, truth, dominant);

  fs::create_directories(a.report_dir);
  const fs::path rd(a.report_dir);
  {
    std::ofstream os(rd / "traj_errors.csv");
    write_traj_errors_csv(os, tab);
  }
  {
    std::ofstream os(rd / "confusion.csv");
    write_confusion_csv(os, cls.confusion);
  }
  {
    std::ofstream os(rd / "metrics.csv");
    write_metrics_csv(os, cls);
  }
  nlohmann::json rep;
  for (const auto& [sec, err] : tab.per_second_mean) {
    std::ofstream os(rd / ("cdf_t" + std::to_string(sec) + ".csv"));
    const auto step = static_cast<std::size_t>(std::llround(sec * rate)) - 1;
    const auto cdf = error_cdf(step_errors(inf.traj_pred, traj_true, step, coord));
    write_cdf_csv(os, cdf);
    rep["p90_t" + std::to_string(sec)] = percentile(cdf, 0.9);
    rep["mean_error_t" + std::to_string(sec)] = err;
  }
  rep["windows"] = static_cast<std::int64_t>(ds.size());
  rep["micro_f1"] = cls.averages.micro_f1;
  rep["macro_f1"] = cls.averages.macro_f1;
  rep["micro_precision"] = cls.averages.micro_precision;
  rep["micro_recall"] = cls.averages.micro_recall;
  rep["macro_precision"] = cls.averages.macro_precision;
  rep["macro_recall"] = cls.averages.macro_recall;
  for (int c : cls.averages.absent_classes)
    rep["absent_classes"].push_back(state_name(c));
  write_text_file((rd / "eval_report.json").string(), rep.dump(2) + "\n");

  std::cout << "evaluated " << ds.size() << " windows; micro-F1 " << cls.averages.micro_f1
            << ", macro-F1 " << cls.averages.macro_f1;
  if (!tab.per_second_mean.empty())
    std::cout << ", mean error t+1 " << tab.per_second_mean.front().second << " m";
  std::cout << "; reports -> " << a.report_dir << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint, input, output;
  std::string schema = "dataset1";
  std::string columns_file;
};

int cmd_predict(const PredictArgs& a) {
  Inference inf{load_checkpoint<double>(a.checkpoint), {}, {}};
  const CoordMode coord = inf.ckpt.meta.coord;

  std::ifstream is(a.input);
  if (!is) raise(Errc::io_failure, "cannot open '" + a.input + "'");
  ParseResult pr = parse_flight_csv(is, schema_from(a.schema), columns_from_file(a.columns_file),
                                    fs::path(a.input).stem().string(), coord);

  LabeledFlight lf;
  lf.labels.assign(pr.series.size(), 0);  // windowing only; labels unused here
  lf.series = std::move(pr.series);
  WindowedDataset ds = window_for_checkpoint(inf.ckpt, {lf});
  apply_scaler(ds, inf.ckpt.scaler);
  run_inference(inf, ds);

  std::ofstream os(a.output);
  if (!os) raise(Errc::io_failure, "cannot open '" + a.output + "' for writing");
  os << "window,start_row,pred_state";
  for (int c = 0; c < kNumStates; ++c) os << ",p_" << state_name(c);
  for (int t = 1; t <= ds.hs; ++t) os << ",x_t" << t << ",y_t" << t << ",z_t" << t;
  os << '\n';
  char buf[40];
  for (std::size_t w = 0; w < ds.size(); ++w) {
    const auto& p = inf.probs[w];
    const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    os << w << ',' << ds.meta[w].start << ',' << state_name(pred);
    for (int c = 0; c < kNumStates; ++c) {
      std::snprintf(buf, sizeof(buf), "%.10g", p[static_cast<std::size_t>(c)]);
      os << ',' << buf;
    }
    for (int t = 0; t < ds.hs; ++t)
      for (int c = 0; c < 3; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", inf.traj_pred.at(w, t, c));
        os << ',' << buf;
      }
    os << '\n';
  }
  if (!os) raise(Errc::io_failure, "write to '" + a.output + "' failed");
  std::cout << "predicted " << ds.size() << " window(s) -> " << a.output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task flight-state classification and trajectory prediction"};
  app.require_subcommand(1);

  AnnotateArgs an;
  CLI::App* annotate = app.add_subcommand("annotate", "label a flight csv with state classes");
  annotate->add_option("--input", an.input, "flight csv to label")->required();
  annotate->add_option("--output", an.output, "labeled csv to write")->required();
  annotate->add_option("--schema", an.schema, "input schema: dataset1|dataset2");
  annotate->add_option("--coord", an.coord, "position coordinates: geodetic|local");
  annotate->add_option("--eps-xy", an.th.eps_xy, "horizontal displacement threshold, m/step");
  annotate->add_option("--eps-z", an.th.eps_z, "vertical displacement threshold, m/step");
  annotate->add_option("--eps-yaw", an.th.eps_yaw, "yaw change threshold, rad/step");
  annotate->add_option("--columns", an.columns_file, "json file of canonical->actual header renames");

  SynthArgs sy;
  CLI::App* synth = app.add_subcommand("synth", "generate synthetic flights");
  synth->add_option("--out-dir", sy.out_dir, "output directory")->required();
  synth->add_option("--count", sy.count, "number of flights");
  synth->add_option("--pattern", sy.pattern,
                    "triangular|square|polygonal|random|mixed (cycles all four)");
  synth->add_option("--duration", sy.duration_s, "flight duration, s");
  synth->add_option("--altitude", sy.altitude_m, "cruise altitude, m");
  synth->add_option("--speed", sy.speed_mps, "cruise speed, m/s");
  synth->add_option("--payload", sy.payload_g, "payload, g");
  synth->add_option("--wind", sy.wind_mps, "mean wind speed, m/s");
  synth->add_option("--noise-scale", sy.noise_scale, "sensor noise scale (0 = clean)");
  synth->add_option("--rate", sy.rate_hz, "sample rate, Hz");
  synth->add_option("--seed", sy.seed, "base seed (flight i uses seed+i)");
  synth->add_option("--coord", sy.coord, "geodetic|local");

  RunConfig tc;
  std::string config_path;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model from a directory of flights");
  train_cmd->add_option("--config", config_path, "json run-config file");
  train_cmd->add_option("--data-dir", tc.data_dir, "directory of flight csvs");
  train_cmd->add_option("--checkpoint", tc.checkpoint, "checkpoint path to write");
  train_cmd->add_option("--report-dir", tc.report_dir, "directory for history/split files");
  std::string t_schema, t_coord, t_precision, t_split_mode;
  int t_ws = -1, t_hs = -1, t_epochs = -1, t_batch = -1, t_patience = -1;
  int t_shared = -1, t_second = -1;
  double t_lr = -1, t_wtraj = -1, t_wcls = -1;
  std::int64_t t_seed = -1, t_split_seed = -1;
  train_cmd->add_option("--schema", t_schema, "dataset1|dataset2");
  train_cmd->add_option("--coord", t_coord, "geodetic|local");
  train_cmd->add_option("--precision", t_precision, "f32|f64");
  train_cmd->add_option("--ws", t_ws, "window size, steps");
  train_cmd->add_option("--hs", t_hs, "horizon size, steps");
  train_cmd->add_option("--epochs", t_epochs, "max training epochs");
  train_cmd->add_option("--batch", t_batch, "batch size");
  train_cmd->add_option("--patience", t_patience, "early-stop patience, epochs");
  train_cmd->add_option("--lr", t_lr, "learning rate");
  train_cmd->add_option("--w-traj", t_wtraj, "trajectory loss weight");
  train_cmd->add_option("--w-cls", t_wcls, "classification loss weight");
  train_cmd->add_option("--seed", t_seed, "training seed");
  train_cmd->add_option("--split-seed", t_split_seed, "split seed");
  train_cmd->add_option("--split-mode", t_split_mode, "by_flight|by_window");
  train_cmd->add_option("--shared-units", t_shared, "first lstm width");
  train_cmd->add_option("--second-units", t_second, "second lstm width");
  std::string t_columns;
  train_cmd->add_option("--columns", t_columns, "json file of canonical->actual header renames");

  EvaluateArgs ev;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on labeled flights");
  evaluate->add_option("--checkpoint", ev.checkpoint, "checkpoint to load")->required();
  evaluate->add_option("--data-dir", ev.data_dir, "directory of flight csvs")->required();
  evaluate->add_option("--report-dir", ev.report_dir, "directory for report files");
  evaluate->add_option("--split-file", ev.split_file, "split.json from train");
  evaluate->add_option("--split", ev.split, "train|val|test|all (needs --split-file)");
  evaluate->add_option("--schema", ev.schema, "dataset1|dataset2");
  evaluate->add_option("--columns", ev.columns_file, "json file of canonical->actual header renames");

  PredictArgs pd;
  CLI::App* predict = app.add_subcommand("predict", "predict states and trajectories for one flight");
  predict->add_option("--checkpoint", pd.checkpoint, "checkpoint to load")->required();
  predict->add_option("--input", pd.input, "flight csv")->required();
  predict->add_option("--output", pd.output, "prediction csv to write")->required();
  predict->add_option("--schema", pd.schema, "dataset1|dataset2");
  predict->add_option("--columns", pd.columns_file, "json file of canonical->actual header renames");

  CLI11_PARSE(app, argc, argv);

  try {
    if (annotate->parsed()) return cmd_annotate(an);
    if (synth->parsed()) return cmd_synth(sy);
    if (train_cmd->parsed()) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      // flags override the config file
      if (!tc.data_dir.empty()) cfg.data_dir = tc.data_dir;
      if (train_cmd->count("--checkpoint")) cfg.checkpoint = tc.checkpoint;
      if (train_cmd->count("--report-dir")) cfg.report_dir = tc.report_dir;
      if (!t_schema.empty()) cfg.schema = schema_from(t_schema);
      if (!t_coord.empty()) cfg.coord = coord_from(t_coord);
      if (!t_precision.empty()) cfg.precision = t_precision;
      if (t_ws > 0) cfg.ws = t_ws;
      if (t_hs > 0) cfg.hs = t_hs;
      if (t_epochs > 0) cfg.train.max_epochs = t_epochs;
      if (t_batch > 0) cfg.train.batch_size = t_batch;
      if (t_patience > 0) cfg.train.early_stop_patience = t_patience;
      if (t_lr > 0) cfg.train.learning_rate = t_lr;
      if (t_wtraj >= 0) cfg.train.loss_weights.w_traj = t_wtraj;
      if (t_wcls >= 0) cfg.train.loss_weights.w_cls = t_wcls;
      if (t_seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(t_seed);
      if (t_split_seed >= 0) cfg.split.seed = static_cast<std::uint64_t>(t_split_seed);
      if (!t_split_mode.empty())
        cfg.split.mode = t_split_mode == "by_window" ? SplitMode::by_window : SplitMode::by_flight;
      if (t_shared > 0) cfg.arch.shared_units = t_shared;
      if (t_second > 0) cfg.arch.second_units = t_second;
      if (!t_columns.empty()) cfg.columns = columns_from_file(t_columns);
      return cmd_train(cfg);
    }
    if (evaluate->parsed()) return cmd_evaluate(ev);
    if (predict->parsed()) return cmd_predict(pd);
  } catch (const Error& e) {
    std::cerr << "error[" << errc_name(e.code()) << "]: " << e.message() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[Internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
