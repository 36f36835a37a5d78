#pragma once

#include <cstddef>
#include <vector>

#include "mlfst/model.hpp"
#include "mlfst/nn.hpp"
#include "mlfst/pipeline.hpp"

namespace mlfst {

template <class S>
struct Batch {
  Seq<S> x;       // WS matrices [F, B]
  Seq<S> traj;    // HS matrices [3, B]
  Mat<S> states;  // [5, B] multi-hot
  std::vector<std::size_t> window_idx;
};

// Gathers the given windows into column-per-sample matrices for the model.
template <class S>
Batch<S> assemble_batch(const WindowedDataset& ds, const std::vector<std::size_t>& idx) {
  require(!idx.empty(), Errc::empty_dataset, "empty batch");
  const int B = static_cast<int>(idx.size());

  Batch<S> b;
  b.window_idx = idx;
  b.x.assign(ds.ws, Mat<S>(ds.feature_count, B));
  b.traj.assign(ds.hs, Mat<S>(3, B));
  b.states = Mat<S>(kNumStates, B);

  for (int j = 0; j < B; ++j) {
    const std::size_t w = idx[static_cast<std::size_t>(j)];
    for (int t = 0; t < ds.ws; ++t)
      for (int k = 0; k < ds.feature_count; ++k)
        b.x[t](k, j) = static_cast<S>(ds.inputs.at(w, t, k));
    for (int t = 0; t < ds.hs; ++t)
      for (int c = 0; c < 3; ++c) b.traj[t](c, j) = static_cast<S>(ds.traj_targets.at(w, t, c));
    for (int s = 0; s < kNumStates; ++s)
      b.states(s, j) = static_cast<S>(ds.state_targets[w][s]);
  }
  return b;
}

}  // namespace mlfst
