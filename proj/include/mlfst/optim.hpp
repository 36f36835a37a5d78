#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mlfst/batching.hpp"
#include "mlfst/error.hpp"
#include "mlfst/log.hpp"
#include "mlfst/model.hpp"
#include "mlfst/pipeline.hpp"

namespace mlfst {

template <class S>
struct AdamState {
  std::vector<Mat<S>> m, v;  // first/second moments, in for_each_parameter order
  long t = 0;
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S epsilon = S(1e-8);
};

template <class S>
AdamState<S> init_adam(ModelParams<S>& model) {
  AdamState<S> s;
  for_each_parameter(model, [&](const std::string&, const Mat<S>& p) {
    s.m.push_back(Mat<S>::Zero(p.rows(), p.cols()));
    s.v.push_back(Mat<S>::Zero(p.rows(), p.cols()));
  });
  return s;
}

// One bias-corrected Adam update over all model parameters.
template <class S>
void adam_step(ModelParams<S>& model, const ModelGrads<S>& grads, AdamState<S>& s, S lr) {
  std::vector<const Mat<S>*> glist;
  for_each_parameter(grads, [&](const std::string&, const Mat<S>& g) { glist.push_back(&g); });
  require(glist.size() == s.m.size(), Errc::shape_mismatch,
          "gradient tensor count does not match optimizer state");

  s.t += 1;
  const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(s.beta1), s.t));
  const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(s.beta2), s.t));

  std::size_t k = 0;
  for_each_parameter(model, [&](const std::string&, Mat<S>& p) {
    const Mat<S>& g = *glist[k];
    require(g.rows() == p.rows() && g.cols() == p.cols(), Errc::shape_mismatch,
            "gradient shape does not match parameter");
    s.m[k] = s.beta1 * s.m[k] + (S(1) - s.beta1) * g;
    s.v[k] = s.beta2 * s.v[k] + (S(1) - s.beta2) * g.cwiseProduct(g);
    const Mat<S> mhat = s.m[k] / bc1;
    const Mat<S> vhat = s.v[k] / bc2;
    p -= lr * (mhat.array() / (vhat.array().sqrt() + s.epsilon)).matrix();
    ++k;
  });
}

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int max_epochs = 100;
  int early_stop_patience = 10;
  double min_delta = 1e-6;
  LossWeights loss_weights;
  std::uint64_t seed = 42;
  bool shuffle = true;
};

inline void validate_train_config(const TrainConfig& c) {
  require(c.learning_rate > 0.0, Errc::config_invalid, "learning_rate must be > 0");
  require(c.batch_size >= 1, Errc::config_invalid, "batch_size must be >= 1");
  require(c.max_epochs >= 1, Errc::config_invalid, "max_epochs must be >= 1");
  require(c.early_stop_patience >= 1, Errc::config_invalid, "patience must be >= 1");
  validate_loss_weights(c.loss_weights);
}

struct EpochStats {
  int epoch = 0;  // 0-based
  double train_total = 0.0, train_mse = 0.0, train_bce = 0.0;
  double val_total = 0.0, val_mse = 0.0, val_bce = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_total = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

namespace detail {

// First non-finite entry across parameters and gradients, for diagnostics.
template <class S>
std::string first_non_finite(ModelParams<S>& model, ModelGrads<S>& grads) {
  std::string found;
  auto scan = [&](const std::string& name, const Mat<S>& t, const char* kind) {
    if (!found.empty()) return;
    if (!t.allFinite()) found = std::string(kind) + " '" + name + "'";
  };
  for_each_parameter(model, [&](const std::string& n, Mat<S>& t) { scan(n, t, "parameter"); });
  for_each_parameter(grads, [&](const std::string& n, Mat<S>& t) { scan(n, t, "gradient"); });
  return found.empty() ? std::string("loss only (all tensors finite)") : found;
}

template <class S>
LossValues eval_split(ModelParams<S>& model, const WindowedDataset& ds, int batch_size,
                      const LossWeights& w) {
  LossValues acc;
  std::size_t done = 0;
  ModelCache<S> cache;
  while (done < ds.size()) {
    const std::size_t take = std::min<std::size_t>(batch_size, ds.size() - done);
    std::vector<std::size_t> idx(take);
    std::iota(idx.begin(), idx.end(), done);
    Batch<S> b = assemble_batch<S>(ds, idx);
    ModelOutput<S> out = model_forward(model, b.x, /*train=*/false, cache);
    const LossValues lv = combined_loss(out.traj, b.traj, out.probs, b.states, w);
    const double f = static_cast<double>(take);
    acc.total += lv.total * f;
    acc.mse += lv.mse * f;
    acc.bce += lv.bce * f;
    done += take;
  }
  const double n = static_cast<double>(ds.size());
  acc.total /= n;
  acc.mse /= n;
  acc.bce /= n;
  return acc;
}

inline void write_history_line(std::ostream& os, const EpochStats& e) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "{\"epoch\":%d,\"train_total\":%.10g,\"train_mse\":%.10g,\"train_bce\":%.10g,"
                "\"val_total\":%.10g,\"val_mse\":%.10g,\"val_bce\":%.10g}",
                e.epoch, e.train_total, e.train_mse, e.train_bce, e.val_total, e.val_mse,
                e.val_bce);
  os << buf << '\n';
}

}  // namespace detail

// Mini-batch training with early stopping. Each epoch shuffles the training
// windows (seeded), keeps the final partial batch, and evaluates the
// validation loss; the parameters of the best validation epoch are restored
// into `model` before returning. `history_log`, when given, receives one
// JSON line per epoch.
template <class S>
TrainHistory train(ModelParams<S>& model, const WindowedDataset& train_set,
                   const WindowedDataset& val_set, const TrainConfig& cfg,
                   std::ostream* history_log = nullptr) {
  validate_train_config(cfg);
  require(train_set.size() > 0, Errc::empty_dataset, "training set is empty");
  require(val_set.size() > 0, Errc::empty_dataset, "validation set is empty");
  require(train_set.ws == model.arch.ws && train_set.hs == model.arch.hs &&
              train_set.feature_count == model.arch.feature_count,
          Errc::shape_mismatch, "dataset geometry does not match the model architecture");

  std::mt19937_64 rng(cfg.seed);
  AdamState<S> adam = init_adam(model);
  TrainHistory hist;

  ModelParams<S> best = model;
  int bad_epochs = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);

    LossValues train_acc;
    std::size_t done = 0;
    ModelCache<S> cache;
    while (done < order.size()) {
      const std::size_t take = std::min<std::size_t>(cfg.batch_size, order.size() - done);
      std::vector<std::size_t> idx(order.begin() + done, order.begin() + done + take);
      done += take;

      Batch<S> b = assemble_batch<S>(train_set, idx);
      ModelOutput<S> out = model_forward(model, b.x, /*train=*/true, cache);
      const LossValues lv = combined_loss(out.traj, b.traj, out.probs, b.states,
                                          cfg.loss_weights);
      LossGrads<S> dl = combined_loss_grads(out.traj, b.traj, out.probs, b.states,
                                            cfg.loss_weights);
      ModelGrads<S> grads = model_backward(model, cache, dl);

      if (!std::isfinite(lv.total)) {
        raise(Errc::non_finite_loss, "epoch " + std::to_string(epoch) + ": first culprit is " +
                                         detail::first_non_finite(model, grads));
      }
      adam_step(model, grads, adam, static_cast<S>(cfg.learning_rate));

      const double f = static_cast<double>(take);
      train_acc.total += lv.total * f;
      train_acc.mse += lv.mse * f;
      train_acc.bce += lv.bce * f;
    }
    const double n = static_cast<double>(order.size());
    EpochStats es;
    es.epoch = epoch;
    es.train_total = train_acc.total / n;
    es.train_mse = train_acc.mse / n;
    es.train_bce = train_acc.bce / n;

    const LossValues val = detail::eval_split(model, val_set, cfg.batch_size, cfg.loss_weights);
    if (!std::isfinite(val.total)) {
      ModelGrads<S> dummy = zero_model_grads(model);
      raise(Errc::non_finite_loss, "validation at epoch " + std::to_string(epoch) +
                                       ": first culprit is " +
                                       detail::first_non_finite(model, dummy));
    }
    es.val_total = val.total;
    es.val_mse = val.mse;
    es.val_bce = val.bce;
    hist.epochs.push_back(es);
    if (history_log) detail::write_history_line(*history_log, es);
    log_info("epoch " + std::to_string(epoch) + " train " + std::to_string(es.train_total) +
             " val " + std::to_string(es.val_total));

    if (val.total < hist.best_val_total - cfg.min_delta) {
      hist.best_val_total = val.total;
      hist.best_epoch = epoch;
      best = model;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.early_stop_patience) {
        hist.stopped_early = true;
        break;
      }
    }
  }

  model = std::move(best);
  return hist;
}

}  // namespace mlfst
