#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mlfst/error.hpp"
#include "mlfst/labeler.hpp"
#include "mlfst/log.hpp"
#include "mlfst/telemetry.hpp"
#include "mlfst/tensor.hpp"

namespace mlfst {

struct LabeledFlight {
  FlightSeries series;
  std::vector<int> labels;  // one DroneState index per record
};

struct WindowMeta {
  std::string flight_id;
  std::size_t start = 0;  // first input row within the source flight
};

// Sliding-window training tensors. For window i of a flight: inputs cover rows
// [i, i+WS), trajectory targets the positions of rows [i+WS, i+WS+HS), and the
// state target is the multi-hot union of the labels over that horizon.
struct WindowedDataset {
  Tensor3<double> inputs;        // [N, WS, F]
  Tensor3<double> traj_targets;  // [N, HS, 3] (x, y, z)
  std::vector<std::array<std::uint8_t, kNumStates>> state_targets;  // [N, 5] multi-hot
  std::vector<int> dominant_state;  // majority label over each window's horizon
  std::vector<WindowMeta> meta;
  int ws = 0;
  int hs = 0;
  int feature_count = kFeatureCount;
  std::vector<std::string> feature_order = feature_names();

  std::size_t size() const { return meta.size(); }
};

inline WindowedDataset slide_windows(const std::vector<LabeledFlight>& flights, int ws, int hs) {
  require(ws >= 1 && hs >= 1, Errc::config_invalid, "WS and HS must be >= 1");

  WindowedDataset ds;
  ds.ws = ws;
  ds.hs = hs;

  std::size_t total = 0;
  for (const auto& fl : flights) {
    const std::size_t len = fl.series.records.size();
    require(fl.labels.size() == len, Errc::shape_mismatch,
            "flight '" + fl.series.flight_id + "' has " + std::to_string(fl.labels.size()) +
                " labels for " + std::to_string(len) + " records");
    if (len < static_cast<std::size_t>(ws + hs)) {
      log_warn("skipping flight '" + fl.series.flight_id + "': " + std::to_string(len) +
               " records < WS+HS = " + std::to_string(ws + hs));
      continue;
    }
    total += len - static_cast<std::size_t>(ws + hs) + 1;
  }
  if (total == 0) raise(Errc::no_usable_flights, "no flight is at least WS+HS records long");

  ds.inputs.resize(total, ws, kFeatureCount);
  ds.traj_targets.resize(total, hs, 3);
  ds.state_targets.reserve(total);
  ds.dominant_state.reserve(total);
  ds.meta.reserve(total);

  std::size_t w = 0;
  for (const auto& fl : flights) {
    const auto& rec = fl.series.records;
    const std::size_t len = rec.size();
    if (len < static_cast<std::size_t>(ws + hs)) continue;

    for (std::size_t i = 0; i + ws + hs <= len; ++i, ++w) {
      for (int t = 0; t < ws; ++t) {
        const auto f = record_features(rec[i + t]);
        for (int k = 0; k < kFeatureCount; ++k) ds.inputs.at(w, t, k) = f[k];
      }
      std::array<std::uint8_t, kNumStates> hot{};
      std::array<int, kNumStates> count{};
      for (int t = 0; t < hs; ++t) {
        const auto& r = rec[i + ws + t];
        ds.traj_targets.at(w, t, 0) = r.position_x;
        ds.traj_targets.at(w, t, 1) = r.position_y;
        ds.traj_targets.at(w, t, 2) = r.position_z;
        const int s = fl.labels[i + ws + t];
        hot[s] = 1;
        ++count[s];
      }
      ds.state_targets.push_back(hot);
      // majority state over the horizon; ties go to the lower class index
      ds.dominant_state.push_back(static_cast<int>(
          std::max_element(count.begin(), count.end()) - count.begin()));
      ds.meta.push_back({fl.series.flight_id, i});
    }
  }
  return ds;
}

struct ScalerParams {
  std::vector<double> mean;  // per feature
  std::vector<double> std;   // per feature, > 0
  std::vector<std::string> feature_order;
};

// Per-feature standardization statistics over all rows of all training
// windows. Population (1/N) variance convention; zero-variance features get
// std = 1 so scaling is a no-op on them.
inline ScalerParams fit_scaler(const WindowedDataset& train) {
  require(train.size() > 0, Errc::empty_training_set, "cannot fit a scaler on zero windows");
  const int F = train.feature_count;
  const std::size_t rows = train.size() * static_cast<std::size_t>(train.ws);

  ScalerParams p;
  p.feature_order = train.feature_order;
  p.mean.assign(F, 0.0);
  p.std.assign(F, 0.0);

  for (std::size_t w = 0; w < train.size(); ++w)
    for (int t = 0; t < train.ws; ++t)
      for (int k = 0; k < F; ++k) p.mean[k] += train.inputs.at(w, t, k);
  for (int k = 0; k < F; ++k) p.mean[k] /= static_cast<double>(rows);

  for (std::size_t w = 0; w < train.size(); ++w)
    for (int t = 0; t < train.ws; ++t)
      for (int k = 0; k < F; ++k) {
        const double d = train.inputs.at(w, t, k) - p.mean[k];
        p.std[k] += d * d;
      }
  for (int k = 0; k < F; ++k) {
    p.std[k] = std::sqrt(p.std[k] / static_cast<double>(rows));
    if (p.std[k] == 0.0) {
      log_warn("feature '" + p.feature_order[k] + "' has zero variance; std forced to 1");
      p.std[k] = 1.0;
    }
  }
  return p;
}

// x -> (x - mean)/std over the last axis of an [?, ?, F] tensor.
inline void apply_scaler(Tensor3<double>& x, const ScalerParams& p) {
  require(x.d2 == static_cast<std::size_t>(p.mean.size()), Errc::shape_mismatch,
          "tensor feature axis does not match scaler");
  for (std::size_t a = 0; a < x.d0; ++a)
    for (std::size_t b = 0; b < x.d1; ++b)
      for (std::size_t k = 0; k < x.d2; ++k)
        x.at(a, b, k) = (x.at(a, b, k) - p.mean[k]) / p.std[k];
}

inline void invert_scaler(Tensor3<double>& x, const ScalerParams& p) {
  require(x.d2 == static_cast<std::size_t>(p.mean.size()), Errc::shape_mismatch,
          "tensor feature axis does not match scaler");
  for (std::size_t a = 0; a < x.d0; ++a)
    for (std::size_t b = 0; b < x.d1; ++b)
      for (std::size_t k = 0; k < x.d2; ++k)
        x.at(a, b, k) = x.at(a, b, k) * p.std[k] + p.mean[k];
}

// Trajectory targets/predictions ([?, ?, 3]) share the statistics of the
// position features, so inverse-transformed predictions land in original units.
inline void apply_traj_scaler(Tensor3<double>& x, const ScalerParams& p) {
  require(x.d2 == 3, Errc::shape_mismatch, "trajectory tensor must have 3 channels");
  for (std::size_t a = 0; a < x.d0; ++a)
    for (std::size_t b = 0; b < x.d1; ++b)
      for (int c = 0; c < 3; ++c) {
        const int k = kPositionFeatureIdx[c];
        x.at(a, b, c) = (x.at(a, b, c) - p.mean[k]) / p.std[k];
      }
}

inline void invert_traj_scaler(Tensor3<double>& x, const ScalerParams& p) {
  require(x.d2 == 3, Errc::shape_mismatch, "trajectory tensor must have 3 channels");
  for (std::size_t a = 0; a < x.d0; ++a)
    for (std::size_t b = 0; b < x.d1; ++b)
      for (int c = 0; c < 3; ++c) {
        const int k = kPositionFeatureIdx[c];
        x.at(a, b, c) = x.at(a, b, c) * p.std[k] + p.mean[k];
      }
}

inline void apply_scaler(WindowedDataset& ds, const ScalerParams& p) {
  apply_scaler(ds.inputs, p);
  apply_traj_scaler(ds.traj_targets, p);
}

enum class SplitMode { by_flight, by_window };

struct SplitSpec {
  double train_frac = 0.7;
  double val_frac = 0.15;
  double test_frac = 0.15;
  SplitMode mode = SplitMode::by_flight;
  std::uint64_t seed = 42;
};

struct SplitResult {
  WindowedDataset train, val, test;
  // flight id -> 0 (train), 1 (val), 2 (test); only filled in by_flight mode
  std::vector<std::pair<std::string, int>> flight_assignment;
};

namespace detail {

inline WindowedDataset subset_windows(const WindowedDataset& ds,
                                      const std::vector<std::size_t>& idx) {
  WindowedDataset out;
  out.ws = ds.ws;
  out.hs = ds.hs;
  out.feature_count = ds.feature_count;
  out.feature_order = ds.feature_order;
  out.inputs.resize(idx.size(), ds.ws, ds.feature_count);
  out.traj_targets.resize(idx.size(), ds.hs, 3);
  out.state_targets.reserve(idx.size());
  out.dominant_state.reserve(idx.size());
  out.meta.reserve(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const std::size_t w = idx[j];
    for (int t = 0; t < ds.ws; ++t)
      for (int k = 0; k < ds.feature_count; ++k)
        out.inputs.at(j, t, k) = ds.inputs.at(w, t, k);
    for (int t = 0; t < ds.hs; ++t)
      for (int c = 0; c < 3; ++c) out.traj_targets.at(j, t, c) = ds.traj_targets.at(w, t, c);
    out.state_targets.push_back(ds.state_targets[w]);
    out.dominant_state.push_back(ds.dominant_state[w]);
    out.meta.push_back(ds.meta[w]);
  }
  return out;
}

inline void split_counts(std::size_t n, const SplitSpec& spec, std::size_t& n_tr,
                         std::size_t& n_va, std::size_t& n_te) {
  n_tr = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train_frac));
  n_va = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.val_frac));
  require(n_tr + n_va <= n, Errc::degenerate_split, "split fractions overflow the set");
  n_te = n - n_tr - n_va;
  require(n_tr >= 1 && n_va >= 1 && n_te >= 1, Errc::degenerate_split,
          "a split would be empty: " + std::to_string(n_tr) + "/" + std::to_string(n_va) + "/" +
              std::to_string(n_te));
}

}  // namespace detail

// Disjoint, exhaustive train/val/test partition, deterministic given the seed.
// by_flight keeps every window of a flight in one split so val/test never share
// source rows with training windows.
inline SplitResult split_dataset(const WindowedDataset& ds, const SplitSpec& spec) {
  require(spec.train_frac > 0.0 && spec.train_frac < 1.0 && spec.val_frac > 0.0 &&
              spec.val_frac < 1.0 && spec.test_frac > 0.0 && spec.test_frac < 1.0,
          Errc::config_invalid, "split fractions must lie in (0,1)");
  require(std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) <= 1e-9,
          Errc::config_invalid, "split fractions must sum to 1");
  require(ds.size() >= 3, Errc::degenerate_split,
          "need at least 3 windows, got " + std::to_string(ds.size()));

  std::mt19937_64 rng(spec.seed);
  SplitResult out;

  if (spec.mode == SplitMode::by_window) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_tr, n_va, n_te;
    detail::split_counts(order.size(), spec, n_tr, n_va, n_te);

    std::vector<std::size_t> tr(order.begin(), order.begin() + n_tr);
    std::vector<std::size_t> va(order.begin() + n_tr, order.begin() + n_tr + n_va);
    std::vector<std::size_t> te(order.begin() + n_tr + n_va, order.end());
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    std::sort(te.begin(), te.end());
    out.train = detail::subset_windows(ds, tr);
    out.val = detail::subset_windows(ds, va);
    out.test = detail::subset_windows(ds, te);
    return out;
  }

  // by_flight: unique flight ids in order of first appearance
  std::vector<std::string> ids;
  for (const auto& m : ds.meta)
    if (ids.empty() || std::find(ids.begin(), ids.end(), m.flight_id) == ids.end())
      ids.push_back(m.flight_id);

  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_tr, n_va, n_te;
  detail::split_counts(ids.size(), spec, n_tr, n_va, n_te);

  std::vector<int> assign(ids.size());
  for (std::size_t j = 0; j < order.size(); ++j)
    assign[order[j]] = j < n_tr ? 0 : (j < n_tr + n_va ? 1 : 2);
  for (std::size_t f = 0; f < ids.size(); ++f)
    out.flight_assignment.emplace_back(ids[f], assign[f]);

  std::vector<std::size_t> tr, va, te;
  for (std::size_t w = 0; w < ds.size(); ++w) {
    const auto it = std::find(ids.begin(), ids.end(), ds.meta[w].flight_id);
    switch (assign[it - ids.begin()]) {
      case 0: tr.push_back(w); break;
      case 1: va.push_back(w); break;
      default: te.push_back(w); break;
    }
  }
  out.train = detail::subset_windows(ds, tr);
  out.val = detail::subset_windows(ds, va);
  out.test = detail::subset_windows(ds, te);
  return out;
}

}  // namespace mlfst
