#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mlfst/error.hpp"
#include "mlfst/labeler.hpp"
#include "mlfst/nn.hpp"
#include "mlfst/telemetry.hpp"

namespace mlfst {

struct ArchConfig {
  int shared_units = 256;
  int second_units = 128;
  int cls_dense_units = 64;
  int traj_td_units = 64;
  int num_states = kNumStates;
  int ws = 30;
  int hs = 30;
  int feature_count = kFeatureCount;
  LstmOutputMode lstm_output_mode = LstmOutputMode::relu_post;
};

inline void validate_arch(const ArchConfig& a) {
  require(a.shared_units > 0 && a.second_units > 0 && a.cls_dense_units > 0 &&
              a.traj_td_units > 0 && a.ws > 0 && a.hs > 0 && a.feature_count > 0,
          Errc::config_invalid, "all architecture sizes must be positive");
  require(a.num_states == kNumStates, Errc::config_invalid, "num_states must be 5");
}

// Total trainable scalars:
//   lstm(H,F) = 4(H*F + H*H + H), dense(o,i) = o*i + o, batchnorm(C) = 2C
//   count = lstm(H1,F) + lstm(H2,H1) + 2*H2
//         + dense(Dc,H2) + dense(5,Dc) + dense(Dt,H2) + dense(3,Dt)
inline std::int64_t parameter_count(const ArchConfig& a) {
  auto lstm = [](std::int64_t h, std::int64_t f) { return 4 * (h * f + h * h + h); };
  auto dense = [](std::int64_t o, std::int64_t i) { return o * i + o; };
  return lstm(a.shared_units, a.feature_count) + lstm(a.second_units, a.shared_units) +
         2 * a.second_units + dense(a.cls_dense_units, a.second_units) +
         dense(a.num_states, a.cls_dense_units) + dense(a.traj_td_units, a.second_units) +
         dense(3, a.traj_td_units);
}

// Shared trunk: LSTM (return sequence) -> LSTM (last state). Classification
// head: batchnorm -> dense (no activation) -> dense -> sigmoid. Trajectory
// head: repeat the trunk state HS times -> time-distributed dense (relu) ->
// time-distributed dense (linear).
template <class S>
struct ModelParams {
  LstmParams<S> shared_lstm, second_lstm;
  BatchNormParams<S> cls_bn;
  DenseParams<S> cls_dense;  // no activation
  DenseParams<S> cls_out;    // logits; the head's sigmoid is applied in forward
  DenseParams<S> traj_td;    // relu
  DenseParams<S> traj_out;   // linear
  ArchConfig arch;
};

template <class S>
struct ModelGrads {
  LstmGrads<S> shared_lstm, second_lstm;
  BatchNormGrads<S> cls_bn;
  DenseGrads<S> cls_dense, cls_out, traj_td, traj_out;
};

template <class S>
ModelParams<S> build_model(const ArchConfig& arch, std::uint64_t seed) {
  validate_arch(arch);
  std::mt19937_64 rng(seed);
  ModelParams<S> m;
  m.arch = arch;
  m.shared_lstm = init_lstm<S>(arch.shared_units, arch.feature_count, arch.lstm_output_mode, rng);
  m.second_lstm = init_lstm<S>(arch.second_units, arch.shared_units, arch.lstm_output_mode, rng);
  m.cls_bn = init_batchnorm<S>(arch.second_units);
  m.cls_dense = init_dense<S>(arch.cls_dense_units, arch.second_units, Activation::none, rng);
  m.cls_out = init_dense<S>(arch.num_states, arch.cls_dense_units, Activation::none, rng);
  m.traj_td = init_dense<S>(arch.traj_td_units, arch.second_units, Activation::relu, rng);
  m.traj_out = init_dense<S>(3, arch.traj_td_units, Activation::linear, rng);
  return m;
}

// Visits every trainable tensor with a stable name. Works on ModelParams and
// ModelGrads alike (their field names match); the order defines optimizer and
// checkpoint alignment, so it must never change.
template <class M, class F>
void for_each_parameter(M& m, F&& f) {
  auto lstm = [&](auto& l, const std::string& prefix) {
    f(prefix + ".Wf", l.Wf);
    f(prefix + ".Wi", l.Wi);
    f(prefix + ".Wc", l.Wc);
    f(prefix + ".Wo", l.Wo);
    f(prefix + ".Uf", l.Uf);
    f(prefix + ".Ui", l.Ui);
    f(prefix + ".Uc", l.Uc);
    f(prefix + ".Uo", l.Uo);
    f(prefix + ".bf", l.bf);
    f(prefix + ".bi", l.bi);
    f(prefix + ".bc", l.bc);
    f(prefix + ".bo", l.bo);
  };
  auto dense = [&](auto& d, const std::string& prefix) {
    f(prefix + ".W", d.W);
    f(prefix + ".b", d.b);
  };
  lstm(m.shared_lstm, "shared_lstm");
  lstm(m.second_lstm, "second_lstm");
  f("cls_bn.gamma", m.cls_bn.gamma);
  f("cls_bn.beta", m.cls_bn.beta);
  dense(m.cls_dense, "cls_dense");
  dense(m.cls_out, "cls_out");
  dense(m.traj_td, "traj_td");
  dense(m.traj_out, "traj_out");
}

template <class S>
ModelGrads<S> zero_model_grads(const ModelParams<S>& m) {
  ModelGrads<S> g;
  g.shared_lstm = zero_grads(m.shared_lstm);
  g.second_lstm = zero_grads(m.second_lstm);
  g.cls_bn = {Mat<S>::Zero(m.cls_bn.channels, 1), Mat<S>::Zero(m.cls_bn.channels, 1)};
  auto zd = [](const DenseParams<S>& d) {
    return DenseGrads<S>{Mat<S>::Zero(d.out, d.in), Mat<S>::Zero(d.out, 1)};
  };
  g.cls_dense = zd(m.cls_dense);
  g.cls_out = zd(m.cls_out);
  g.traj_td = zd(m.traj_td);
  g.traj_out = zd(m.traj_out);
  return g;
}

template <class S>
struct ModelCache {
  LstmCache<S> l1, l2;
  BatchNormCache<S> bn;
  DenseCache<S> cls_d1, cls_d2;
  std::vector<DenseCache<S>> td1, td2;
  Mat<S> h2;  // trunk output [H2, B]
  bool train_mode = false;
};

template <class S>
struct ModelOutput {
  Seq<S> traj;   // HS matrices [3, B], scaled units
  Mat<S> probs;  // [5, B]
};

template <class S>
ModelOutput<S> model_forward(ModelParams<S>& m, const Seq<S>& x, bool train,
                             ModelCache<S>& cache) {
  require(static_cast<int>(x.size()) == m.arch.ws, Errc::shape_mismatch,
          "input sequence length " + std::to_string(x.size()) + " != WS " +
              std::to_string(m.arch.ws));
  cache.train_mode = train;

  Seq<S> hs1 = lstm_layer_forward(m.shared_lstm, x, /*return_sequence=*/true, cache.l1);
  Seq<S> h2seq = lstm_layer_forward(m.second_lstm, hs1, /*return_sequence=*/false, cache.l2);
  cache.h2 = h2seq[0];

  // classification head
  Mat<S> bn = batchnorm_forward(m.cls_bn, cache.h2, train, cache.bn);
  Mat<S> d1 = dense_forward(m.cls_dense, bn, cache.cls_d1);
  Mat<S> logits = dense_forward(m.cls_out, d1, cache.cls_d2);

  ModelOutput<S> out;
  out.probs = detail::sigmoid(logits);

  // trajectory head
  Seq<S> rep = repeat_vector(cache.h2, m.arch.hs);
  Seq<S> mid = time_distributed_forward(m.traj_td, rep, cache.td1);
  out.traj = time_distributed_forward(m.traj_out, mid, cache.td2);

  require(out.probs.allFinite(), Errc::non_finite_activation, "state probabilities");
  for (const auto& t : out.traj)
    require(t.allFinite(), Errc::non_finite_activation, "trajectory output");
  return out;
}

struct LossWeights {
  double w_traj = 1.0;
  double w_cls = 1.0;
};

inline void validate_loss_weights(const LossWeights& w) {
  require(w.w_traj >= 0.0 && w.w_cls >= 0.0 && w.w_traj + w.w_cls > 0.0, Errc::config_invalid,
          "loss weights must be non-negative and not both zero");
}

struct LossValues {
  double total = 0.0;
  double mse = 0.0;
  double bce = 0.0;
};

// mse: mean over B*HS*3 squared errors (scaled units). bce: mean over B*5 of
// the binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
// total = w_traj*mse + w_cls*bce.
template <class S>
LossValues combined_loss(const Seq<S>& traj_pred, const Seq<S>& traj_true, const Mat<S>& probs,
                         const Mat<S>& y, const LossWeights& w) {
  validate_loss_weights(w);
  require(traj_pred.size() == traj_true.size() && !traj_pred.empty(), Errc::shape_mismatch,
          "trajectory horizon mismatch");
  require(probs.rows() == y.rows() && probs.cols() == y.cols(), Errc::shape_mismatch,
          "state probability shape mismatch");

  const double B = static_cast<double>(probs.cols());
  LossValues out;

  double se = 0.0;
  for (std::size_t t = 0; t < traj_pred.size(); ++t) {
    require(traj_pred[t].rows() == traj_true[t].rows() &&
                traj_pred[t].cols() == traj_true[t].cols(),
            Errc::shape_mismatch, "trajectory step shape mismatch");
    se += static_cast<double>(
        (traj_pred[t] - traj_true[t]).template cast<double>().squaredNorm());
  }
  out.mse = se / (B * static_cast<double>(traj_pred.size()) * 3.0);

  constexpr double kClamp = 1e-7;
  double bce = 0.0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c)
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      double p = static_cast<double>(probs(r, c));
      p = std::min(1.0 - kClamp, std::max(kClamp, p));
      const double yv = static_cast<double>(y(r, c));
      bce -= yv * std::log(p) + (1.0 - yv) * std::log(1.0 - p);
    }
  out.bce = bce / (B * static_cast<double>(probs.rows()));

  out.total = w.w_traj * out.mse + w.w_cls * out.bce;
  return out;
}

template <class S>
struct LossGrads {
  Seq<S> dtraj;    // upstream gradient for each trajectory step [3, B]
  Mat<S> dlogits;  // gradient at the classification head's pre-sigmoid logits
};

// Analytic gradients of the combined loss. The classification gradient is
// taken directly in logit space, (p - y)/N, which folds the sigmoid and the
// (unclamped) cross-entropy into one numerically stable expression.
template <class S>
LossGrads<S> combined_loss_grads(const Seq<S>& traj_pred, const Seq<S>& traj_true,
                                 const Mat<S>& probs, const Mat<S>& y, const LossWeights& w) {
  validate_loss_weights(w);
  LossGrads<S> g;
  const S B = static_cast<S>(probs.cols());
  const S traj_norm =
      static_cast<S>(w.w_traj) * S(2) / (B * static_cast<S>(traj_pred.size()) * S(3));
  g.dtraj.resize(traj_pred.size());
  for (std::size_t t = 0; t < traj_pred.size(); ++t)
    g.dtraj[t] = traj_norm * (traj_pred[t] - traj_true[t]);

  const S cls_norm = static_cast<S>(w.w_cls) / (B * static_cast<S>(probs.rows()));
  g.dlogits = cls_norm * (probs - y);
  return g;
}

// Backpropagates both heads into the shared trunk (gradients sum there).
template <class S>
ModelGrads<S> model_backward(const ModelParams<S>& m, const ModelCache<S>& cache,
                             const LossGrads<S>& dLoss) {
  require(cache.train_mode, Errc::stale_cache, "backward requires a train-mode forward cache");
  ModelGrads<S> g;

  // trajectory head
  auto [g_traj_out, d_mid] = time_distributed_backward(m.traj_out, cache.td2, dLoss.dtraj);
  auto [g_traj_td, d_rep] = time_distributed_backward(m.traj_td, cache.td1, d_mid);
  g.traj_out = std::move(g_traj_out);
  g.traj_td = std::move(g_traj_td);
  Mat<S> dh2 = Mat<S>::Zero(cache.h2.rows(), cache.h2.cols());
  for (const auto& d : d_rep) dh2 += d;

  // classification head
  auto [g_cls_out, d_d1] = dense_backward(m.cls_out, cache.cls_d2, dLoss.dlogits);
  auto [g_cls_dense, d_bn] = dense_backward(m.cls_dense, cache.cls_d1, d_d1);
  auto [g_bn, d_h2_cls] = batchnorm_backward(m.cls_bn, cache.bn, d_bn);
  g.cls_out = std::move(g_cls_out);
  g.cls_dense = std::move(g_cls_dense);
  g.cls_bn = std::move(g_bn);
  dh2 += d_h2_cls;

  // trunk
  auto [g_l2, d_hs1] = lstm_layer_backward(m.second_lstm, cache.l2, Seq<S>{dh2});
  auto [g_l1, d_x] = lstm_layer_backward(m.shared_lstm, cache.l1, d_hs1);
  (void)d_x;
  g.second_lstm = std::move(g_l2);
  g.shared_lstm = std::move(g_l1);
  return g;
}

}  // namespace mlfst
