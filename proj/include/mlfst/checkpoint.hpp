#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlfst/error.hpp"
#include "mlfst/model.hpp"
#include "mlfst/pipeline.hpp"
#include "mlfst/telemetry.hpp"

namespace mlfst {

// Binary container: magic 'MLFS', version, one JSON metadata block, then
// length-prefixed named tensors (row-major f64 payloads, little-endian).
// Parameters are stored as f64 regardless of the runtime scalar, so an
// f32 model round-trips bit-exactly.
inline constexpr char kCheckpointMagic[4] = {'M', 'L', 'F', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Run facts carried alongside the weights so inference can reproduce the
// training-time data handling.
struct CheckpointMeta {
  Schema schema = Schema::dataset2;
  CoordMode coord = CoordMode::geodetic;
  std::string precision = "f64";  // scalar type used at training time
  LossWeights loss_weights;
  double sample_rate_hz = 10.0;
};

namespace detail {

template <class T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_raw(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) raise(Errc::corrupt_checkpoint, "file truncated");
}

inline void write_tensor(std::ostream& os, const std::string& name, const Mat<double>& t) {
  write_raw(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_raw(os, static_cast<std::uint8_t>(0));  // dtype 0 = f64
  write_raw(os, static_cast<std::uint64_t>(t.rows()));
  write_raw(os, static_cast<std::uint64_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) write_raw(os, t(r, c));
}

inline std::pair<std::string, Mat<double>> read_tensor(std::istream& is) {
  std::uint32_t name_len = 0;
  read_raw(is, name_len);
  if (name_len > 4096) raise(Errc::corrupt_checkpoint, "implausible tensor name length");
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  if (!is) raise(Errc::corrupt_checkpoint, "file truncated in tensor name");
  std::uint8_t dtype = 0;
  read_raw(is, dtype);
  if (dtype != 0) raise(Errc::corrupt_checkpoint, "unknown tensor dtype " + std::to_string(dtype));
  std::uint64_t rows = 0, cols = 0;
  read_raw(is, rows);
  read_raw(is, cols);
  if (rows > (1u << 24) || cols > (1u << 24))
    raise(Errc::corrupt_checkpoint, "implausible tensor shape");
  Mat<double> t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c)
      read_raw(is, t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
  return {std::move(name), std::move(t)};
}

}  // namespace detail

template <class S>
void save_checkpoint(const ModelParams<S>& model, const ScalerParams& scaler,
                     const CheckpointMeta& meta, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(Errc::io_failure, "cannot open '" + path + "' for writing");

  nlohmann::json j;
  j["arch"] = {{"shared_units", model.arch.shared_units},
               {"second_units", model.arch.second_units},
               {"cls_dense_units", model.arch.cls_dense_units},
               {"traj_td_units", model.arch.traj_td_units},
               {"num_states", model.arch.num_states},
               {"ws", model.arch.ws},
               {"hs", model.arch.hs},
               {"feature_count", model.arch.feature_count},
               {"lstm_output_mode", lstm_mode_name(model.arch.lstm_output_mode)}};
  j["schema"] = schema_name(meta.schema);
  j["coord_mode"] = coord_mode_name(meta.coord);
  j["precision"] = meta.precision;
  j["loss_weights"] = {{"w_traj", meta.loss_weights.w_traj}, {"w_cls", meta.loss_weights.w_cls}};
  j["sample_rate_hz"] = meta.sample_rate_hz;
  j["feature_order"] = scaler.feature_order;
  j["bn_initialized"] = model.cls_bn.initialized;
  const std::string meta_str = j.dump();

  os.write(kCheckpointMagic, 4);
  detail::write_raw(os, kCheckpointVersion);
  detail::write_raw(os, static_cast<std::uint64_t>(meta_str.size()));
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  std::vector<std::pair<std::string, Mat<double>>> tensors;
  for_each_parameter(model, [&](const std::string& name, const Mat<S>& t) {
    tensors.emplace_back(name, t.template cast<double>());
  });
  tensors.emplace_back("cls_bn.running_mean", model.cls_bn.running_mean.template cast<double>());
  tensors.emplace_back("cls_bn.running_var", model.cls_bn.running_var.template cast<double>());
  Mat<double> sm(static_cast<Eigen::Index>(scaler.mean.size()), 1);
  Mat<double> ss(static_cast<Eigen::Index>(scaler.std.size()), 1);
  for (std::size_t i = 0; i < scaler.mean.size(); ++i) {
    sm(static_cast<Eigen::Index>(i), 0) = scaler.mean[i];
    ss(static_cast<Eigen::Index>(i), 0) = scaler.std[i];
  }
  tensors.emplace_back("scaler.mean", std::move(sm));
  tensors.emplace_back("scaler.std", std::move(ss));

  detail::write_raw(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) detail::write_tensor(os, name, t);
  os.flush();
  if (!os) raise(Errc::io_failure, "write to '" + path + "' failed");
}

template <class S>
struct LoadedCheckpoint {
  ModelParams<S> model;
  ScalerParams scaler;
  CheckpointMeta meta;
};

template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(Errc::io_failure, "cannot open '" + path + "' for reading");

  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    raise(Errc::corrupt_checkpoint, "bad magic bytes");
  std::uint32_t version = 0;
  detail::read_raw(is, version);
  if (version != kCheckpointVersion)
    raise(Errc::corrupt_checkpoint, "expected version " + std::to_string(kCheckpointVersion) +
                                        ", found " + std::to_string(version));

  std::uint64_t meta_len = 0;
  detail::read_raw(is, meta_len);
  if (meta_len > (1u << 20)) raise(Errc::corrupt_checkpoint, "implausible metadata length");
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!is) raise(Errc::corrupt_checkpoint, "file truncated in metadata");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::corrupt_checkpoint, std::string("metadata is not valid JSON: ") + e.what());
  }

  LoadedCheckpoint<S> out;
  ArchConfig arch;
  try {
    const auto& a = j.at("arch");
    arch.shared_units = a.at("shared_units").get<int>();
    arch.second_units = a.at("second_units").get<int>();
    arch.cls_dense_units = a.at("cls_dense_units").get<int>();
    arch.traj_td_units = a.at("traj_td_units").get<int>();
    arch.num_states = a.at("num_states").get<int>();
    arch.ws = a.at("ws").get<int>();
    arch.hs = a.at("hs").get<int>();
    arch.feature_count = a.at("feature_count").get<int>();
    arch.lstm_output_mode = lstm_mode_from_name(a.at("lstm_output_mode").get<std::string>());
    out.meta.schema = j.at("schema").get<std::string>() == "dataset1" ? Schema::dataset1
                                                                      : Schema::dataset2;
    out.meta.coord = j.at("coord_mode").get<std::string>() == "local" ? CoordMode::local
                                                                      : CoordMode::geodetic;
    out.meta.precision = j.at("precision").get<std::string>();
    out.meta.loss_weights.w_traj = j.at("loss_weights").at("w_traj").get<double>();
    out.meta.loss_weights.w_cls = j.at("loss_weights").at("w_cls").get<double>();
    out.meta.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    out.scaler.feature_order = j.at("feature_order").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::corrupt_checkpoint, std::string("metadata field missing or mistyped: ") + e.what());
  }

  // build an empty model of the right geometry, then overwrite every tensor
  out.model = build_model<S>(arch, 0);
  out.model.cls_bn.initialized = j.value("bn_initialized", false);

  std::map<std::string, Mat<S>*> slots;
  for_each_parameter(out.model,
                     [&](const std::string& name, Mat<S>& t) { slots[name] = &t; });
  slots["cls_bn.running_mean"] = &out.model.cls_bn.running_mean;
  slots["cls_bn.running_var"] = &out.model.cls_bn.running_var;

  std::uint32_t tensor_count = 0;
  detail::read_raw(is, tensor_count);
  if (tensor_count > 4096) raise(Errc::corrupt_checkpoint, "implausible tensor count");

  Mat<double> scaler_mean, scaler_std;
  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    auto [name, t] = detail::read_tensor(is);
    if (name == "scaler.mean") {
      scaler_mean = std::move(t);
      continue;
    }
    if (name == "scaler.std") {
      scaler_std = std::move(t);
      continue;
    }
    auto it = slots.find(name);
    if (it == slots.end())
      raise(Errc::corrupt_checkpoint, "unexpected tensor '" + name + "'");
    require(it->second->rows() == t.rows() && it->second->cols() == t.cols(),
            Errc::corrupt_checkpoint,
            "tensor '" + name + "' has shape " + std::to_string(t.rows()) + "x" +
                std::to_string(t.cols()) + ", expected " + std::to_string(it->second->rows()) +
                "x" + std::to_string(it->second->cols()));
    *it->second = t.cast<S>();
    ++filled;
  }
  if (filled != slots.size())
    raise(Errc::corrupt_checkpoint, "checkpoint is missing " +
                                        std::to_string(slots.size() - filled) +
                                        " model tensor(s)");
  if (scaler_mean.size() == 0 || scaler_std.size() == 0)
    raise(Errc::corrupt_checkpoint, "checkpoint is missing scaler tensors");
  require(scaler_mean.rows() == out.model.arch.feature_count && scaler_mean.cols() == 1 &&
              scaler_std.rows() == scaler_mean.rows() && scaler_std.cols() == 1,
          Errc::corrupt_checkpoint, "scaler tensor shape does not match feature count");

  out.scaler.mean.resize(static_cast<std::size_t>(scaler_mean.rows()));
  out.scaler.std.resize(static_cast<std::size_t>(scaler_std.rows()));
  for (Eigen::Index r = 0; r < scaler_mean.rows(); ++r) {
    out.scaler.mean[static_cast<std::size_t>(r)] = scaler_mean(r, 0);
    out.scaler.std[static_cast<std::size_t>(r)] = scaler_std(r, 0);
  }
  return out;
}

}  // namespace mlfst
